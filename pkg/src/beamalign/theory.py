"""Closed-form recovery-probability and sample-complexity calculators.

All graph probabilities are computed in exact rational arithmetic; a
brute-force support-enumeration oracle validates the closed forms on small
instances, including the equality condition for unequal set sizes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .encoder import balanced_set_sizes
from .errors import MLessThanK

ORACLE_MAX_N = 14


def elementary_symmetric(sizes, k: int) -> int:
    """e_k(sizes): sum over k-subsets of the product of set sizes."""
    e = [1] + [0] * k
    for r in sizes:
        for j in range(min(k, len(e) - 1), 0, -1):
            e[j] += r * e[j - 1]
    return e[k]


def nm_graph_prob_for_sizes(sizes, k: int) -> Fraction:
    """Probability that a uniform K-support hits K distinct sets of the
    given sizes: e_k(sizes) / C(N, K)."""
    n = int(sum(sizes))
    if k < 0 or k > n:
        raise ValueError("sparsity must lie in [0, N]")
    if k > len(sizes):
        raise MLessThanK(f"K={k} active nodes cannot avoid collisions in {len(sizes)} sets")
    return Fraction(elementary_symmetric(sizes, k), comb(n, k))


def nm_graph_prob(n: int, m: int, k: int) -> Fraction:
    """Probability that one balanced random graph is multiton-free.

    For M | N this is the closed form r^K C(M,K)/C(N,K) with r = N/M; for
    non-divisible N the balanced floor/ceil sizes enter the generalized
    product formula. Exact rational output.
    """
    if m < 1 or m > n:
        raise ValueError("need 1 <= M <= N")
    if k > m:
        raise MLessThanK(f"need M >= K (got M={m}, K={k})")
    return nm_graph_prob_for_sizes(balanced_set_sizes(n, m), k)


def equal_size_bound(n: int, m: int, k: int) -> Fraction:
    """The equal-set-size value r^K C(M,K)/C(N,K) with r = N/M (rational even
    when M does not divide N); an upper bound for any sizes summing to N."""
    if k > m:
        raise MLessThanK(f"need M >= K (got M={m}, K={k})")
    return Fraction(n, m) ** k * comb(m, k) / comb(n, k)


def success_prob(lam, n_graphs: int):
    """Recovery probability with L independent graphs: 1 - (1 - lambda)^L.

    Exact when lam is a Fraction; float in, float out otherwise.
    """
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    if n_graphs < 1:
        raise ValueError("need at least one graph")
    return 1 - (1 - lam) ** n_graphs


def required_graphs(lam, p0) -> int:
    """Smallest L with 1 - (1 - lambda)^L >= p0."""
    if not 0 < p0 < 1:
        raise ValueError("target probability must lie in (0, 1)")
    if lam <= 0:
        raise ValueError("lambda = 0 cannot reach any positive target")
    if lam >= 1:
        return 1
    fail, target = 1 - lam, 1 - p0
    guess = max(1, math.ceil(math.log(float(target)) / math.log(float(fail))))
    while fail ** guess > target:
        guess += 1
    while guess > 1 and fail ** (guess - 1) <= target:
        guess -= 1
    return guess


LOG_BASES = ("base2", "natural")


def _log(value: float, base: str) -> float:
    return math.log2(value) if base == "base2" else math.log(value)


@dataclass(frozen=True)
class SampleComplexityBound:
    """Pieces of the measurement-count bound T >= c K^2 h at M = K^2.

    f lower-bounds the per-graph success probability, h = 1/log((1-f)^-1),
    and c = 2 log((1-p0)^-1). The product c*h is base-invariant, but the
    familiar constant ~1.51 for h's large-K limit arises with base-2 logs.
    """

    k: int
    p0: float
    log_base: str
    f: float
    h: float
    c: float
    t_min: float
    h_limit: float


def sample_complexity_bound(k: int, p0: float = 0.99,
                            log_base: str = "base2") -> SampleComplexityBound:
    """Evaluate f, h, c and the bound c*K^2*h at the working point M = K^2."""
    if k < 1:
        raise ValueError("sparsity must be at least 1")
    if log_base not in LOG_BASES:
        raise ValueError(f"log_base must be one of {LOG_BASES}")
    if not 0 < p0 < 1:
        raise ValueError("target probability must lie in (0, 1)")
    f = (1.0 - (1.0 - 1.0 / k) / k) ** k
    h = 0.0 if f >= 1.0 else 1.0 / _log(1.0 / (1.0 - f), log_base)
    c = 2.0 * _log(1.0 / (1.0 - p0), log_base)
    h_limit = 1.0 / _log(1.0 / (1.0 - math.exp(-1.0)), log_base)
    return SampleComplexityBound(
        k=k, p0=p0, log_base=log_base, f=f, h=h, c=c,
        t_min=c * k * k * h, h_limit=h_limit,
    )


def oracle_nm_prob(n: int, m: int, k: int, partition) -> Fraction:
    """Exhaustive-enumeration probability that a uniform K-support lands in
    K distinct sets of the given explicit partition.

    This is the definition itself, independent of any closed form; n is
    capped to keep the enumeration around 10^4 supports.
    """
    if n > ORACLE_MAX_N:
        raise ValueError(f"enumeration oracle capped at N <= {ORACLE_MAX_N}")
    if len(partition) != m:
        raise ValueError("partition size does not match m")
    cell_of = np.full(n, -1, dtype=int)
    for label, nodes in enumerate(partition):
        for node in nodes:
            cell_of[node] = label
    if np.any(cell_of < 0):
        raise ValueError("partition must cover all left nodes")
    hits = 0
    for support in itertools.combinations(range(n), k):
        cells = {cell_of[i] for i in support}
        if len(cells) == k:
            hits += 1
    return Fraction(hits, comb(n, k))


def empirical_success_rate(n: int, m: int, n_graphs: int, k: int,
                           trials: int, rng_seed=0, threads: int = 1) -> float:
    """Monte Carlo exact-recovery rate of the noiseless pipeline."""
    from .harness import ExperimentConfig, run_trials

    cfg = ExperimentConfig(
        n_antennas=n, m_sets=m, n_graphs=n_graphs, k_paths=k,
        mode="noiseless", trials=trials, seed=rng_seed, threads=threads,
    )
    results = run_trials(cfg)
    return sum(r.success for r in results) / len(results)


def theory_row(n: int, m: int, n_graphs: int, k: int, p0: float = 0.99,
               log_base: str = "base2") -> dict:
    """One CSV-ready record of the calculator outputs."""
    lam = nm_graph_prob(n, m, k)
    p = success_prob(lam, n_graphs)
    bound = sample_complexity_bound(k, p0, log_base)
    return {
        "n": n,
        "m": m,
        "l": n_graphs,
        "k": k,
        "lambda": float(lam),
        "p": float(p),
        "l_required": required_graphs(lam, p0),
        "t_bound": bound.t_min,
    }
