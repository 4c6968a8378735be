"""End-to-end acceptance suite.

Each test prints one [criterion NN] PASS/FAIL line (run pytest -s or -v to
see them live; they also appear in captured output on failure).
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from beamalign import (
    ChannelConfig,
    DetectorConfig,
    ExperimentConfig,
    ModulationSpec,
    NoiseModel,
    SparseSignal,
    assemble_matrix,
    beamforming_gain,
    build_ensemble,
    decode,
    design_permutations,
    dft_matrix,
    equal_size_bound,
    measure,
    nm_graph_prob,
    oracle_nm_prob,
    robust_decode,
    sample_complexity_bound,
    success_prob,
)
from beamalign.cli import main as cli_main
from beamalign.harness import run_trials
from beamalign.robust import DEFAULT_FALSE_ALARM
from beamalign.theory import balanced_set_sizes


def report(num: int, ok: bool, detail: str) -> bool:
    print(f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def noiseless_rate(n, m, l, k, trials=10_000, seed=0, r=8):
    cfg = ExperimentConfig(n_antennas=n, n_rf_chains=r, m_sets=m, n_graphs=l,
                           k_paths=k, trials=trials, seed=seed)
    res = run_trials(cfg)
    return sum(t.success for t in res) / len(res)


def test_criterion_01_theory_exactness(capsys):
    expected = {(16, 1): "94.4882%", (8, 2): "98.6050%",
                (4, 4): "99.6450%", (2, 8): "99.6333%"}
    start = time.perf_counter()
    ok = True
    for (m, l), pct in expected.items():
        code = cli_main(["theory", "--n", "128", "--m", str(m),
                         "--k", "2", "--l", str(l)])
        out = capsys.readouterr().out
        ok &= code == 0 and pct in out
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1.0
    assert report(1, ok, f"four published tradeoff points to 4 decimals in {elapsed:.2f}s")


def test_criterion_02_oracle_equivalence():
    start = time.perf_counter()
    exact = True
    cases = 0
    for n in range(2, 13):
        for m in (d for d in range(1, n + 1) if n % d == 0):
            for k in range(1, m + 1):
                part, cursor = [], 0
                for size in balanced_set_sizes(n, m):
                    part.append(list(range(cursor, cursor + size)))
                    cursor += size
                exact &= nm_graph_prob(n, m, k) == oracle_nm_prob(n, m, k, part)
                cases += 1

    rng = np.random.default_rng(20_24)
    inequality = True
    for _ in range(200):
        n = int(rng.integers(4, 13))
        m = int(rng.integers(2, min(n, 6) + 1))
        cuts = np.sort(rng.choice(np.arange(1, n), size=m - 1, replace=False))
        sizes = np.diff(np.concatenate([[0], cuts, [n]])).tolist()
        k = int(rng.integers(2, m + 1))
        part, cursor = [], 0
        for size in sizes:
            part.append(list(range(cursor, cursor + size)))
            cursor += size
        oracle = oracle_nm_prob(n, m, k, part)
        bound = equal_size_bound(n, m, k)
        inequality &= oracle <= bound
        inequality &= (oracle == bound) == (len(set(sizes)) == 1)
    elapsed = time.perf_counter() - start
    ok = exact and inequality and elapsed < 60.0
    assert report(2, ok, f"{cases} exact-rational equalities and 200 partition "
                         f"inequalities in {elapsed:.1f}s")


def test_criterion_03_monte_carlo_vs_theory():
    start = time.perf_counter()
    worst = 0.0
    for k in (1, 2, 3):
        lam = nm_graph_prob(128, 16, k)
        for l in (1, 2, 3, 4):
            rate = noiseless_rate(128, 16, l, k)
            p = float(success_prob(lam, l))
            worst = max(worst, abs(rate - p))
    elapsed = time.perf_counter() - start
    ok = worst <= 0.012 and elapsed < 300.0
    assert report(3, ok, f"12 points, 1e4 trials each: worst |rate-theory| = "
                         f"{worst:.4f} (limit 0.012) in {elapsed:.0f}s")


def test_criterion_04_n_independence():
    rates = [noiseless_rate(n, 16, 2, 2) for n in (64, 128, 256)]
    spread = max(rates) - min(rates)
    ok = spread < 0.02
    assert report(4, ok, f"T=64 success rates over N=64/128/256: "
                         f"{[f'{r:.4f}' for r in rates]}, spread {spread:.4f}")


def test_criterion_05_m_tradeoff():
    rates = {}
    for m in (2, 4, 8, 16):
        rates[m] = noiseless_rate(128, m, 64 // (2 * m), 2)
    moderate = max(rates[4], rates[8])
    # the M=4/M=2 theory gap (~1e-5) is below Monte Carlo resolution at 1e4
    # trials, so attaining the maximum (ties included) counts as winning
    ok = moderate >= max(rates.values()) and moderate > rates[16]
    assert report(5, ok, "success at T=64 by M: "
                         + ", ".join(f"M={m}:{r:.4f}" for m, r in rates.items())
                         + " (maximized at moderate M)")


def test_criterion_06_detector_calibration():
    draws = 100_000
    target = DEFAULT_FALSE_ALARM
    ok = True
    details = []
    for convention in ("total-power", "per-quadrature"):
        det = DetectorConfig.for_convention(convention)
        sigma2 = 0.37
        noise = NoiseModel(sigma2, convention=convention)
        rng = np.random.default_rng(99)
        w = rng.standard_normal(draws) + 1j * rng.standard_normal(draws)
        rate = float(np.mean(np.abs(noise.quadrature_std * w) > det.threshold(sigma2)))
        ok &= abs(rate - target) <= 0.003
        details.append(f"{convention}: {rate:.4f}")
    compat = DetectorConfig(calibration_mode="paper-compat")
    for sigma2 in (1.0, 0.37, 2.7e-3):
        ok &= compat.threshold(sigma2) == 3.0 * math.sqrt(sigma2)
    assert report(6, ok, f"false-alarm target {target:.4f}: " + ", ".join(details)
                         + "; paper-compat eps == 3*sigma exactly")


def _consistency_instance(seed, n=128, m=16, l=2, k=2):
    rng = np.random.default_rng(seed)
    ens = build_ensemble(n, m, l, 8, rng_seed=rng)
    mod = ModulationSpec.linear(n)
    ens = design_permutations(ens, mod, search_budget=0)
    support = rng.choice(n, size=k, replace=False)
    gains = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    x = SparseSignal.from_support(n, support, gains)
    batch = measure(x, assemble_matrix(ens, mod), NoiseModel(), rng,
                    normalize_rows=True)
    nm_exists = any(len({ens.cells[g, i] for i in support}) == k for g in range(l))
    return batch, ens, mod, nm_exists


def test_criterion_07a_vanishing_noise_consistency():
    equal = 0
    covered = 0
    for seed in range(500):
        batch, ens, mod, nm_exists = _consistency_instance(seed)
        if not nm_exists:
            # without a multiton-free graph the published scheme resolves
            # ambiguous intersections by a seeded coin flip, so the two
            # pipelines legitimately differ; Theorem-1 instances must agree
            continue
        covered += 1
        ref = decode(batch, ens, mod)
        out = robust_decode(batch, ens, mod, DetectorConfig(), 1e-18,
                            np.random.default_rng(seed))
        equal += int(np.array_equal(out.estimate.values, ref.values))
    ok = equal == covered and covered >= 480
    assert report(7, ok, f"(a) sigma^2->0 output bit-equal to noiseless on "
                         f"{equal}/{covered} recoverable instances of 500")


def test_criterion_07bc_nmse_vs_snr():
    medians = {}
    for snr in (0.0, 10.0, 20.0, 30.0):
        cfg = ExperimentConfig(mode="robust", snr_db=snr, n_antennas=128,
                               m_sets=16, n_graphs=2, k_paths=2,
                               trials=2000, seed=0)
        medians[snr] = float(np.median([r.nmse for r in run_trials(cfg)]))
    ordered = [medians[s] for s in (0.0, 10.0, 20.0, 30.0)]
    monotone = all(a >= b for a, b in zip(ordered, ordered[1:]))
    tenfold = medians[30.0] <= medians[0.0] / 10.0
    ok = monotone and tenfold
    assert report(7, ok, "(b,c) median NMSE over SNR 0/10/20/30 dB: "
                         + ", ".join(f"{m:.2e}" for m in ordered)
                         + f"; 30dB/0dB = {medians[30.0] / medians[0.0]:.1e}")


def test_criterion_08_sample_complexity_constants():
    bound = sample_complexity_bound(10**4)
    f_ok = abs(bound.f - math.exp(-1)) < 1e-3
    h_ok = abs(bound.h_limit - 1.51) < 0.01
    ok = f_ok and h_ok
    assert report(8, ok, f"f(1e4,1e4)={bound.f:.6f} vs 1/e={math.exp(-1):.6f}; "
                         f"base-2 h limit {bound.h_limit:.4f} vs 1.51")


def test_criterion_09_beamforming_gain():
    chan = ChannelConfig(128, 8)
    mod = ModulationSpec.linear(128)
    rng = np.random.default_rng(6)

    ens = build_ensemble(128, 16, 1, 8, rng_seed=rng)
    x1 = SparseSignal.from_support(128, [37], [0.6 - 0.8j])
    h1 = dft_matrix(128)[:, 37] * x1.coeffs[37]
    batch = measure(x1, assemble_matrix(ens, mod), NoiseModel(), rng,
                    normalize_rows=True)
    est1 = decode(batch, ens, mod)
    gain1, _ = beamforming_gain(est1, h1, chan, beamspace=x1.coeffs)
    single_exact = gain1 == 128.0

    ens2 = build_ensemble(128, 16, 2, 8, rng_seed=rng)
    x2 = SparseSignal.from_support(128, [5, 90], [1.0, 0.5])
    h2 = dft_matrix(128)[:, [5, 90]] @ x2.coeffs[[5, 90]]
    batch2 = measure(x2, assemble_matrix(ens2, mod), NoiseModel(), rng,
                     normalize_rows=True)
    est2 = decode(batch2, ens2, mod)
    gain2, _ = beamforming_gain(est2, h2, chan, beamspace=x2.coeffs)
    split_ok = abs(gain2 - 0.8 * 128.0) < 1e-9

    ok = single_exact and split_ok
    assert report(9, ok, f"K=1 recovery gain {gain1} (= N exactly); "
                         f"K=2 gains (1,0.5) -> {gain2:.12f} vs 0.8N={0.8 * 128}")


def test_criterion_10_threaded_csv_determinism(tmp_path):
    args = ["sweep", "--axis", "snr", "--values", "5,15", "--n", "64",
            "--m", "8", "--l", "2", "--k", "2", "--mode", "robust",
            "--trials", "300", "--seed", "31"]
    outputs = []
    for threads in (1, 4, 8):
        path = tmp_path / f"threads{threads}.csv"
        code = cli_main(args + ["--threads", str(threads), "--out", str(path)])
        assert code == 0
        outputs.append(path.read_bytes())
    ok = outputs[0] == outputs[1] == outputs[2] and len(outputs[0]) > 0
    assert report(10, ok, f"byte-identical CSV across 1/4/8 threads "
                          f"({len(outputs[0])} bytes)")
