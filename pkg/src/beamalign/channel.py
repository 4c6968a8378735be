"""Physical layer for a ULA transmitter with hybrid analog/digital beamforming.

Geometric multipath channel, unitary beam-space (DFT) representation,
factorization of abstract measurement rows into physical precoders, and the
noisy phaseless measurement process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import C1Violation

NOISE_CONVENTIONS = ("total-power", "per-quadrature")


@dataclass(frozen=True)
class ChannelConfig:
    """Transmit array geometry: N antennas driven by R RF chains."""

    n_antennas: int
    n_rf_chains: int
    wavelength: float = 1.0
    element_spacing: float | None = None  # default: half wavelength

    def __post_init__(self):
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 2.0)
        if self.n_antennas < 1:
            raise ValueError("n_antennas must be positive")
        if not 1 <= self.n_rf_chains <= self.n_antennas:
            raise ValueError("need 1 <= n_rf_chains <= n_antennas")
        if self.wavelength <= 0 or self.element_spacing <= 0:
            raise ValueError("wavelength and element spacing must be positive")


@lru_cache(maxsize=32)
def dft_matrix(n: int) -> np.ndarray:
    """Unitary N-point DFT, D[p, k] = exp(2j*pi*p*k/N)/sqrt(N).

    Symmetric and unitary, hence D^T D* = I; beam-space coefficients obey
    x = D^H h whenever h = D x.
    """
    p = np.arange(n)
    d = np.exp(2j * np.pi * np.outer(p, p) / n) / math.sqrt(n)
    d.setflags(write=False)
    return d


def grid_angle(index: int, cfg: ChannelConfig) -> float:
    """Physical departure angle whose steering vector equals DFT column `index`.

    Grid index k corresponds to spatial frequency 2*pi*k/N per element; the
    matching sin(theta) is wrapped into the visible region [-1, 1].
    """
    n = cfg.n_antennas
    ratio = cfg.wavelength / cfg.element_spacing  # sin-domain period of the array
    s = ratio * (index % n) / n
    s -= ratio * math.floor((s + 1.0) / ratio)
    if s > 1.0:
        raise ValueError(
            f"grid index {index} maps outside the visible region for "
            f"d/lambda={cfg.element_spacing / cfg.wavelength:g}"
        )
    return math.asin(s)


def grid_index(theta: float, cfg: ChannelConfig, tol: float = 1e-9) -> int:
    """Inverse of grid_angle: the DFT column matching angle theta, or ValueError."""
    n = cfg.n_antennas
    k_float = math.sin(theta) * n * cfg.element_spacing / cfg.wavelength
    k = round(k_float) % n
    if abs(k_float - round(k_float)) > tol:
        raise ValueError(f"angle {theta:g} rad is not on the DFT grid")
    return k


def steering_vector(theta: float, cfg: ChannelConfig) -> np.ndarray:
    """Unit-norm ULA array response at departure angle theta (radians)."""
    n = cfg.n_antennas
    step = 2.0 * np.pi / cfg.wavelength * cfg.element_spacing * np.sin(theta)
    return np.exp(1j * step * np.arange(n)) / math.sqrt(n)


@dataclass(frozen=True)
class PathSet:
    """Geometric multipath description: complex gains and departure angles."""

    gains: np.ndarray
    aods: np.ndarray
    on_grid: bool = False

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        aods = np.atleast_1d(np.asarray(self.aods, dtype=float))
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "aods", aods)
        if gains.shape != aods.shape or gains.ndim != 1:
            raise ValueError("gains and aods must be 1-D and of equal length")
        if gains.size < 1:
            raise ValueError("a path set needs at least one path")

    @property
    def n_paths(self) -> int:
        return self.gains.size

    @classmethod
    def from_grid(cls, indices, gains, cfg: ChannelConfig) -> "PathSet":
        """Paths placed exactly on the beam-space grid, given 0-based indices."""
        aods = np.array([grid_angle(int(k), cfg) for k in np.atleast_1d(indices)])
        return cls(gains=np.atleast_1d(gains), aods=aods, on_grid=True)


@dataclass(frozen=True, eq=False)
class SparseSignal:
    """Beam-space coefficient vector with explicit support (0-based indices)."""

    coeffs: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        support = np.asarray(self.support, dtype=int)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "support", support)
        actual = np.flatnonzero(coeffs)
        if actual.size != support.size or np.any(np.sort(support) != actual):
            raise ValueError("support must list exactly the nonzero coefficients")

    @property
    def n(self) -> int:
        return self.coeffs.size

    @property
    def sparsity(self) -> int:
        return self.support.size

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.coeffs)

    @classmethod
    def from_support(cls, n: int, support, gains) -> "SparseSignal":
        coeffs = np.zeros(n, dtype=complex)
        support = np.asarray(support, dtype=int)
        coeffs[support] = np.asarray(gains, dtype=complex)
        return cls(coeffs=coeffs, support=np.sort(support))

    @classmethod
    def from_dense(cls, coeffs) -> "SparseSignal":
        coeffs = np.asarray(coeffs, dtype=complex)
        return cls(coeffs=coeffs, support=np.flatnonzero(coeffs))


@dataclass(frozen=True)
class NoiseModel:
    """Additive complex Gaussian measurement noise plus optional CFO phase.

    `variance` is sigma^2; under the default "total-power" convention it is
    the total complex noise power (each quadrature gets sigma^2/2), while
    "per-quadrature" puts sigma^2 in each quadrature (total 2*sigma^2). The
    latter exists because an epsilon = 3*sigma detector threshold at false
    alarm rate e^{-9/2} is only consistent with a per-quadrature sigma.
    """

    variance: float = 0.0
    cfo_enabled: bool = False
    convention: str = "total-power"

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("noise variance must be nonnegative")
        if self.convention not in NOISE_CONVENTIONS:
            raise ValueError(f"unknown noise convention {self.convention!r}")

    @property
    def quadrature_std(self) -> float:
        if self.convention == "total-power":
            return math.sqrt(self.variance / 2.0)
        return math.sqrt(self.variance)


def synthesize_channel(paths: PathSet, cfg: ChannelConfig):
    """Sum of steering vectors plus its beam-space representation.

    Returns (h, x) with h = sum_p alpha_p a_t(theta_p) and h = D x. When the
    paths are on the grid, x carries exactly one nonzero per path; otherwise
    x is the dense beam-space transform D^H h.
    """
    n = cfg.n_antennas
    h = np.zeros(n, dtype=complex)
    for alpha, theta in zip(paths.gains, paths.aods):
        h += alpha * steering_vector(theta, cfg)
    if paths.on_grid:
        indices = [grid_index(theta, cfg) for theta in paths.aods]
        if len(set(indices)) != len(indices):
            raise ValueError("on-grid paths must occupy distinct grid indices")
        x = SparseSignal.from_support(n, indices, paths.gains)
    else:
        x = SparseSignal.from_dense(dft_matrix(n).conj().T @ h)
    return h, x


@dataclass(frozen=True, eq=False)
class PrecoderFactorization:
    """Hybrid factorization of one abstract measurement row.

    The RF stage picks `selection_columns` of the conjugate DFT and the
    baseband stage applies `baseband_weights`, so the physical beamformer is
    b = D* S f_BB and D^T b reproduces the abstract row exactly.
    """

    selection_columns: np.ndarray
    baseband_weights: np.ndarray
    time_index: int = 0


def factorize_row(a_row: np.ndarray, cfg: ChannelConfig, time_index: int = 0) -> PrecoderFactorization:
    """Split a row of the measurement matrix into (S, f_BB)."""
    a_row = np.asarray(a_row)
    nz = np.flatnonzero(a_row)
    if nz.size > cfg.n_rf_chains:
        raise C1Violation(
            f"row {time_index} has {nz.size} nonzeros but only "
            f"{cfg.n_rf_chains} RF chains are available"
        )
    return PrecoderFactorization(
        selection_columns=nz,
        baseband_weights=a_row[nz].astype(complex),
        time_index=time_index,
    )


def beamforming_vector(fact: PrecoderFactorization, cfg: ChannelConfig) -> np.ndarray:
    """Physical precoder b = D* S f_BB for one measurement instant."""
    d = dft_matrix(cfg.n_antennas)
    return d.conj()[:, fact.selection_columns] @ fact.baseband_weights


def abstract_row(fact: PrecoderFactorization, n: int) -> np.ndarray:
    """The sparse row a(t) = S f_BB realized by the factorization."""
    row = np.zeros(n, dtype=complex)
    row[fact.selection_columns] = fact.baseband_weights
    return row


@dataclass(eq=False)
class PhaselessBatch:
    """Magnitude measurements grouped per (graph, right node) as length-2 pairs.

    `values` holds the magnitudes as sensed; `scales` holds the row norms
    divided out when beams were normalized to unit power (1.0 otherwise).
    Detection thresholds apply to the raw values, ratio/magnitude estimation
    to the compensated product values*scales.
    """

    values: np.ndarray  # (L, M, 2)
    scales: np.ndarray  # (L, M, 2)
    sigma2: float
    convention: str
    cfo_enabled: bool = False
    _compensated: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_graphs(self) -> int:
        return self.values.shape[0]

    @property
    def n_right(self) -> int:
        return self.values.shape[1]

    def compensated(self) -> np.ndarray:
        if self._compensated is None:
            self._compensated = self.values * self.scales
        return self._compensated


def measure(x: SparseSignal, matrix, noise: NoiseModel, rng_seed=None,
            normalize_rows: bool = False) -> PhaselessBatch:
    """Phaseless measurements y_t = |e^{j phi(t)} (A[t,:] x) + w_t|.

    phi(t) is i.i.d. uniform on [0, 2*pi) when CFO is enabled, zero
    otherwise; w_t is complex Gaussian per `noise`. With normalize_rows each
    physical beamformer is scaled to unit norm before sensing and the scale
    is recorded for decoder-side compensation.
    """
    a = matrix.array
    if a.shape[1] != x.n:
        raise ValueError(f"matrix has {a.shape[1]} columns, signal has {x.n}")
    n_rows = a.shape[0]
    signal = a[:, x.support] @ x.coeffs[x.support]
    if normalize_rows:
        scales = np.linalg.norm(a, axis=1)
        if np.any(scales == 0):
            raise ValueError("cannot normalize an all-zero measurement row")
        signal = signal / scales
    else:
        scales = np.ones(n_rows)
    rng = np.random.default_rng(rng_seed)
    if noise.cfo_enabled:
        signal = signal * np.exp(2j * np.pi * rng.random(n_rows))
    if noise.variance > 0:
        w = (rng.standard_normal(n_rows) + 1j * rng.standard_normal(n_rows))
        signal = signal + noise.quadrature_std * w
    y = np.abs(signal)
    shape = (matrix.n_graphs, matrix.n_right, 2)
    return PhaselessBatch(
        values=y.reshape(shape),
        scales=scales.reshape(shape),
        sigma2=noise.variance,
        convention=noise.convention,
        cfo_enabled=noise.cfo_enabled,
    )


def sigma_for_snr(h: np.ndarray, snr_db: float, cfg: ChannelConfig) -> float:
    """Noise variance realizing SNR = 10 log10(||h||^2 / (N sigma^2))."""
    power = float(np.sum(np.abs(h) ** 2))
    if power == 0:
        raise ValueError("zero channel has no defined SNR")
    return power / (cfg.n_antennas * 10.0 ** (snr_db / 10.0))


def snr_for_sigma(h: np.ndarray, sigma2: float, cfg: ChannelConfig) -> float:
    """Inverse of sigma_for_snr."""
    power = float(np.sum(np.abs(h) ** 2))
    if power == 0 or sigma2 <= 0:
        raise ValueError("need a nonzero channel and positive noise variance")
    return 10.0 * math.log10(power / (cfg.n_antennas * sigma2))
