"""Monte Carlo experiment orchestration and metrics.

Trials are embarrassingly parallel: every trial derives its own seed stream
from (root seed, trial index), and aggregation reduces results in trial
order, so metric values are independent of the worker-thread count.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import theory
from .channel import (
    ChannelConfig,
    NoiseModel,
    PathSet,
    SparseSignal,
    dft_matrix,
    measure,
    sigma_for_snr,
    synthesize_channel,
)
from .decoder import MagnitudeEstimate, decode
from .encoder import (
    ModulationSpec,
    assemble_matrix,
    build_ensemble,
    design_permutations,
    load_ensemble,
)
from .errors import ConfigError
from .robust import DEFAULT_FALSE_ALARM, DetectorConfig, robust_decode

SUCCESS_NMSE = 1e-8  # squared relative error below this counts as exact recovery

MODES = ("noiseless", "robust")
SWEEP_AXES = ("t", "n", "m", "snr")

CSV_COLUMNS = (
    "n", "m", "l", "k", "t", "snr_db", "mode", "trials", "seed",
    "success_rate", "nmse", "bf_gain", "theory_p", "wall_ms",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment point.

    T = 2 * m_sets * n_graphs measurements per trial. With auto_rf_chains
    the RF-chain count is raised to ceil(N/M) whenever the configured budget
    cannot realize the code, mirroring sweeps where M or N varies at fixed T.
    """

    n_antennas: int = 128
    n_rf_chains: int = 8
    m_sets: int = 16
    n_graphs: int = 2
    k_paths: int = 2
    modulation: str = "linear"
    omega: float | None = None
    permutation_mode: str = "auto"  # identity | designed | auto (mode-dependent)
    permutation_budget: int = 0
    snr_db: float | None = None
    convention: str = "total-power"
    cfo: bool = False
    false_alarm: float = DEFAULT_FALSE_ALARM
    normalize_beams: bool = True
    mode: str = "noiseless"
    trials: int = 10000
    seed: int = 0
    threads: int = 1
    on_grid: bool = True
    fixed_ensemble: bool = False
    ensemble_file: str | None = None  # replay a saved ensemble (implies fixed)
    auto_rf_chains: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.permutation_mode not in ("auto", "identity", "designed"):
            raise ConfigError("permutation_mode must be auto, identity or designed")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 1 <= self.k_paths <= self.n_antennas:
            raise ConfigError("need 1 <= k_paths <= n_antennas")
        if self.m_sets < 1 or self.m_sets > self.n_antennas:
            raise ConfigError("need 1 <= m_sets <= n_antennas")
        if self.n_graphs < 1:
            raise ConfigError("n_graphs must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        needed = -(-self.n_antennas // self.m_sets)
        if needed > self.n_rf_chains and not self.auto_rf_chains:
            raise ConfigError(
                f"M={self.m_sets} needs {needed} RF chains but only "
                f"{self.n_rf_chains} are configured"
            )

    @property
    def t_measurements(self) -> int:
        return 2 * self.m_sets * self.n_graphs

    @property
    def effective_rf_chains(self) -> int:
        needed = -(-self.n_antennas // self.m_sets)
        return max(self.n_rf_chains, needed) if self.auto_rf_chains else self.n_rf_chains

    def channel_config(self) -> ChannelConfig:
        return ChannelConfig(self.n_antennas, self.effective_rf_chains)

    def modulation_spec(self) -> ModulationSpec:
        if self.modulation == "linear":
            return ModulationSpec.linear(self.n_antennas)
        return ModulationSpec.cosine(self.n_antennas, self.omega)

    def detector(self) -> DetectorConfig:
        return DetectorConfig.for_convention(self.convention, self.false_alarm)

    def use_designed_permutations(self) -> bool:
        if self.permutation_mode == "auto":
            return self.mode == "robust"
        return self.permutation_mode == "designed"

    def derive(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


@dataclass(eq=False)
class TrialResult:
    success: bool
    nmse: float
    bf_gain: float
    bf_flagged: bool = False
    k_hat: int | None = None
    fallback: bool = False


def nmse(estimate: MagnitudeEstimate, truth: np.ndarray) -> float:
    """Squared error of the magnitude estimate, normalized by ||z||^2."""
    truth = np.asarray(truth, dtype=float)
    denom = float(np.sum(truth ** 2))
    if denom == 0:
        raise ValueError("NMSE undefined for an all-zero truth")
    return float(np.sum((estimate.values - truth) ** 2)) / denom


def beamforming_gain(estimate: MagnitudeEstimate, h: np.ndarray, cfg: ChannelConfig,
                     rng=None, beamspace: np.ndarray | None = None) -> tuple[float, bool]:
    """N |a_t(theta_hat)^H h|^2 / ||h||^2 for the strongest estimated beam.

    The steering vector at a grid angle is the matching DFT column, so the
    gain is evaluated in beam space without inverting any angle; callers
    that already hold the beam-space coefficients of h may pass them to
    skip the transform. An all-zero estimate falls back to a random
    direction and is flagged.
    """
    n = cfg.n_antennas
    if beamspace is not None:
        xvec = np.asarray(beamspace, dtype=complex)
    else:
        xvec = dft_matrix(n).conj().T @ np.asarray(h, dtype=complex)
    flagged = False
    if estimate.nonzero_count == 0:
        if rng is None:
            rng = np.random.default_rng()
        best = int(rng.integers(n))
        flagged = True
    else:
        best = int(np.argmax(estimate.values))
    power = np.abs(xvec) ** 2
    total = float(np.sum(power))
    if total == 0:
        raise ValueError("beamforming gain undefined for a zero channel")
    return n * float(power[best]) / total, flagged


def run_trial(cfg: ExperimentConfig, trial_seed, prebuilt=None) -> TrialResult:
    """One end-to-end trial.

    Draws a uniform K-support with unit complex Gaussian gains, redraws the
    graph ensemble (unless one is pinned), measures, decodes per mode, and
    scores exact recovery at the squared-relative-error threshold 1e-8.
    """
    rng = np.random.default_rng(trial_seed)
    chan = cfg.channel_config()
    mod = cfg.modulation_spec()
    n, k = cfg.n_antennas, cfg.k_paths

    gains = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / math.sqrt(2)
    if cfg.on_grid:
        support = np.sort(rng.choice(n, size=k, replace=False))
        x = SparseSignal.from_support(n, support, gains)
        h = dft_matrix(n)[:, support] @ gains  # exact: grid steering = DFT column
    else:
        aods = np.arcsin(rng.uniform(-1.0, 1.0, size=k))
        h, x = synthesize_channel(PathSet(gains, aods, on_grid=False), chan)

    if prebuilt is not None:
        ens, matrix = prebuilt
        mod = matrix.modulation  # replayed ensembles carry their own values
    else:
        ens = build_ensemble(n, cfg.m_sets, cfg.n_graphs, chan.n_rf_chains, rng)
        if cfg.use_designed_permutations():
            ens = design_permutations(ens, mod, cfg.permutation_budget, rng)
        matrix = assemble_matrix(ens, mod)

    sigma2 = 0.0 if cfg.snr_db is None else sigma_for_snr(h, cfg.snr_db, chan)
    noise = NoiseModel(sigma2, cfg.cfo, cfg.convention)
    batch = measure(x, matrix, noise, rng, normalize_rows=cfg.normalize_beams)

    k_hat = None
    fallback = False
    if cfg.mode == "noiseless":
        est = decode(batch, ens, mod)
    else:
        result = robust_decode(batch, ens, mod, cfg.detector(), sigma2, rng)
        est = result.estimate
        k_hat = result.k_hat
        fallback = result.fallback

    err = nmse(est, x.magnitudes)
    gain, flagged = beamforming_gain(est, h, chan, rng, beamspace=x.coeffs)
    return TrialResult(
        success=err < SUCCESS_NMSE,
        nmse=err,
        bf_gain=gain,
        bf_flagged=flagged,
        k_hat=k_hat,
        fallback=fallback,
    )


def pinned_ensemble(cfg: ExperimentConfig):
    """The (ensemble, matrix) shared by all trials, or None when redrawn.

    Replayed ensembles come from their JSON file; otherwise fixed_ensemble
    builds one from a seed stream disjoint from every trial's.
    """
    if cfg.ensemble_file is not None:
        ens, mod = load_ensemble(cfg.ensemble_file)
        if (ens.n_left, ens.n_right, ens.n_graphs) != \
                (cfg.n_antennas, cfg.m_sets, cfg.n_graphs):
            raise ConfigError(
                f"ensemble file {cfg.ensemble_file} has shape "
                f"(N={ens.n_left}, M={ens.n_right}, L={ens.n_graphs}), "
                f"config expects ({cfg.n_antennas}, {cfg.m_sets}, {cfg.n_graphs})")
        return ens, assemble_matrix(ens, mod)
    if cfg.fixed_ensemble:
        ens_rng = np.random.default_rng(
            np.random.SeedSequence(cfg.seed, spawn_key=(2**31,)))
        ens = build_ensemble(cfg.n_antennas, cfg.m_sets, cfg.n_graphs,
                             cfg.channel_config().n_rf_chains, ens_rng)
        mod = cfg.modulation_spec()
        if cfg.use_designed_permutations():
            ens = design_permutations(ens, mod, cfg.permutation_budget, ens_rng)
        return ens, assemble_matrix(ens, mod)
    return None


def run_trials(cfg: ExperimentConfig) -> list[TrialResult]:
    """All trials of one experiment point, reproducibly parallel."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)
    prebuilt = pinned_ensemble(cfg)
    if cfg.threads == 1:
        return [run_trial(cfg, s, prebuilt) for s in seeds]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(lambda s: run_trial(cfg, s, prebuilt), seeds))


@dataclass(eq=False)
class MetricRow:
    """Aggregated metrics for one experiment point (one CSV row)."""

    n: int
    m: int
    l: int
    k: int
    t: int
    snr_db: float | None
    mode: str
    trials: int
    seed: int
    success_rate: float
    nmse: float
    bf_gain: float
    theory_p: float | None
    wall_ms: float


def aggregate(cfg: ExperimentConfig, results: list[TrialResult], wall_ms: float) -> MetricRow:
    rate = sum(r.success for r in results) / len(results)
    theory_p = None
    if cfg.mode == "noiseless" and cfg.k_paths <= cfg.m_sets:
        lam = theory.nm_graph_prob(cfg.n_antennas, cfg.m_sets, cfg.k_paths)
        theory_p = float(theory.success_prob(lam, cfg.n_graphs))
    return MetricRow(
        n=cfg.n_antennas,
        m=cfg.m_sets,
        l=cfg.n_graphs,
        k=cfg.k_paths,
        t=cfg.t_measurements,
        snr_db=cfg.snr_db,
        mode=cfg.mode,
        trials=cfg.trials,
        seed=cfg.seed,
        success_rate=rate,
        nmse=float(np.mean([r.nmse for r in results])),
        bf_gain=float(np.mean([r.bf_gain for r in results])),
        theory_p=theory_p,
        wall_ms=wall_ms,
    )


def simulate(cfg: ExperimentConfig) -> MetricRow:
    start = time.perf_counter()
    results = run_trials(cfg)
    wall_ms = (time.perf_counter() - start) * 1e3
    return aggregate(cfg, results, wall_ms)


def sweep_point(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """Derive the config for one sweep point; T stays fixed on the m axis."""
    if axis == "t":
        t = int(value)
        if t <= 0 or t % (2 * cfg.m_sets) != 0:
            raise ConfigError(f"T={t} is not a positive multiple of 2M={2 * cfg.m_sets}")
        return cfg.derive(n_graphs=t // (2 * cfg.m_sets))
    if axis == "n":
        return cfg.derive(n_antennas=int(value))
    if axis == "m":
        m = int(value)
        t = cfg.t_measurements
        if t % (2 * m) != 0:
            raise ConfigError(f"T={t} is not a multiple of 2M={2 * m}")
        return cfg.derive(m_sets=m, n_graphs=t // (2 * m))
    if axis == "snr":
        return cfg.derive(snr_db=float(value))
    raise ConfigError(f"axis must be one of {SWEEP_AXES}")


def sweep(cfg: ExperimentConfig, axis: str, values) -> list[MetricRow]:
    """One MetricRow per axis value; noiseless rows carry the theory overlay."""
    return [simulate(sweep_point(cfg, axis, v)) for v in values]


def _format_cell(name: str, value) -> str:
    if value is None:
        return ""
    if name in ("success_rate", "theory_p"):
        return f"{value:.6f}"
    if name in ("nmse", "bf_gain"):
        return f"{value:.10g}"
    if name == "snr_db":
        return f"{value:g}"
    if name == "wall_ms":
        return str(int(round(value)))
    return str(value)


def rows_to_csv(rows: list[MetricRow], include_timing: bool = False) -> str:
    """Render MetricRows with locale-independent formatting.

    wall_ms is zeroed unless timing output is requested, keeping CSV output
    byte-identical across runs and thread counts at a fixed seed.
    """
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        record = dict(
            n=row.n, m=row.m, l=row.l, k=row.k, t=row.t, snr_db=row.snr_db,
            mode=row.mode, trials=row.trials, seed=row.seed,
            success_rate=row.success_rate, nmse=row.nmse, bf_gain=row.bf_gain,
            theory_p=row.theory_p,
            wall_ms=row.wall_ms if include_timing else 0,
        )
        lines.append(",".join(_format_cell(c, record[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def write_csv(rows: list[MetricRow], path, cfg: ExperimentConfig | None = None,
              include_timing: bool = False) -> None:
    """Write the CSV plus a sidecar with the full config (noise convention
    included), so every output file records how it was produced."""
    path = Path(path)
    path.write_text(rows_to_csv(rows, include_timing))
    if cfg is not None:
        meta = {"config": asdict(cfg), "columns": list(CSV_COLUMNS)}
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1) + "\n")


@dataclass(eq=False)
class ScanConfig:
    """Array-receiver scan: transmit-side code per receive beam."""

    n_tx: int = 128
    n_rx: int = 16
    rf_tx: int = 8
    rf_rx: int = 1
    m_sets: int = 16
    n_graphs: int = 2
    k_paths_per_column_max: int | None = None
    paths: tuple = ()  # (aoa_index, aod_index, complex gain) triples
    snr_db: float | None = None
    sigma2: float | None = None
    mode: str = "noiseless"
    modulation: str = "linear"
    convention: str = "total-power"
    false_alarm: float = DEFAULT_FALSE_ALARM
    normalize_beams: bool = True
    seed: int = 0


@dataclass(eq=False)
class BeamspaceMatrixEstimate:
    """Recovered |G| over the (receive beam, transmit beam) grid."""

    magnitudes: np.ndarray
    best_pair: tuple[int, int] | None
    no_path: bool
    total_measurements: int


def scan_array_receiver(scan: ScanConfig) -> BeamspaceMatrixEstimate:
    """Sweep the receiver over all N_r DFT combining beams.

    Fixing the combiner to receive beam i reduces the measurement to the
    transmit-side phaseless model on the i-th beam-space channel column, so
    the full sparse-code pipeline recovers its magnitudes; stacking the
    sweeps fills |G| and the argmax entry is the best beam pair. Total
    sample count is N_r * 2ML.
    """
    gbar = np.zeros((scan.n_rx, scan.n_tx), dtype=complex)
    for aoa, aod, gain in scan.paths:
        gbar[int(aoa), int(aod)] += complex(gain)
    sigma2 = float(scan.sigma2 or 0.0)
    if scan.snr_db is not None:
        total_power = float(np.sum(np.abs(gbar) ** 2))
        if total_power > 0:
            sigma2 = total_power / (scan.n_tx * 10.0 ** (scan.snr_db / 10.0))
    if scan.mode == "robust" and sigma2 == 0.0:
        raise ConfigError("robust scan needs snr_db or sigma2")

    mod = (ModulationSpec.linear(scan.n_tx) if scan.modulation == "linear"
           else ModulationSpec.cosine(scan.n_tx))
    detector = DetectorConfig.for_convention(scan.convention, scan.false_alarm)
    mags = np.zeros((scan.n_rx, scan.n_tx))
    root = np.random.SeedSequence(scan.seed)
    noise = NoiseModel(sigma2, False, scan.convention)
    for i, seq in enumerate(root.spawn(scan.n_rx)):
        rng = np.random.default_rng(seq)
        column = gbar[i, :].conj()  # the transmit-side signal seen on beam i
        x = SparseSignal.from_dense(column)
        ens = build_ensemble(scan.n_tx, scan.m_sets, scan.n_graphs, scan.rf_tx, rng)
        if scan.mode == "robust":
            ens = design_permutations(ens, mod, 0, rng)
        matrix = assemble_matrix(ens, mod)
        batch = measure(x, matrix, noise, rng, normalize_rows=scan.normalize_beams)
        if scan.mode == "noiseless":
            est = decode(batch, ens, mod)
        else:
            est = robust_decode(batch, ens, mod, detector, sigma2, rng).estimate
        mags[i, :] = est.values
    total = scan.n_rx * 2 * scan.m_sets * scan.n_graphs
    if np.all(mags == 0):
        return BeamspaceMatrixEstimate(mags, None, True, total)
    best = np.unravel_index(int(np.argmax(mags)), mags.shape)
    return BeamspaceMatrixEstimate(mags, (int(best[0]), int(best[1])), False, total)


def config_from_mapping(data: dict) -> ExperimentConfig:
    """Build a config from a flat mapping, rejecting unknown keys."""
    fields = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    clean = {}
    for key, value in data.items():
        name = key.replace("-", "_")
        if name not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        clean[name] = value
    try:
        return ExperimentConfig(**clean)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _parse_scalar(text: str):
    text = text.strip()
    if text.lower() in _BOOL_WORDS:
        return _BOOL_WORDS[text.lower()]
    if text.lower() in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def load_config(path) -> ExperimentConfig:
    """Load an experiment config from flat key=value text or JSON."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
    else:
        data = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            data[key.strip()] = _parse_scalar(value)
    return config_from_mapping(data)
