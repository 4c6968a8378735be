"""Command-line front end.

Subcommands: theory (closed-form calculators), simulate (one experiment
point), sweep (axis sweep to CSV), scan (array-receiver beam-pair search),
selftest (formula-vs-oracle spot checks). Exit codes: 0 success, 1 runtime
error, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import harness, theory
from .errors import BeamAlignError, ConfigError
from .robust import DEFAULT_FALSE_ALARM, DetectorConfig


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None,
                        help="experiment config file (key=value lines or JSON)")
    parser.add_argument("--seed", type=int, default=None, help="root RNG seed")
    parser.add_argument("--out", type=str, default=None, help="CSV output path")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    parser.add_argument("--mode", choices=harness.MODES, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--n", type=int, default=None, help="antennas / left nodes N")
    parser.add_argument("--m", type=int, default=None, help="right nodes per graph M")
    parser.add_argument("--l", type=int, default=None, help="number of graphs L")
    parser.add_argument("--k", type=int, default=None, help="number of paths K")
    parser.add_argument("--r", type=int, default=None, help="RF chains R")
    parser.add_argument("--snr", type=float, default=None, help="SNR in dB")
    parser.add_argument("--timing", action="store_true",
                        help="write measured wall_ms instead of 0 in CSV output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamalign",
        description="Sparse-encoding / phaseless-decoding beam alignment simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_theory = sub.add_parser("theory", help="closed-form probability calculators")
    _add_common(p_theory)
    p_theory.add_argument("--p0", type=float, default=0.99,
                          help="target recovery probability for L/T bounds")
    p_theory.add_argument("--log-base", choices=theory.LOG_BASES, default="base2")

    p_sim = sub.add_parser("simulate", help="run one Monte Carlo experiment point")
    _add_common(p_sim)
    p_sim.add_argument("--ensemble", type=str, default=None,
                       help="replay a saved ensemble JSON for every trial")
    p_sim.add_argument("--save-ensemble", type=str, default=None,
                       help="pin one ensemble for all trials and save it as JSON")

    p_sweep = sub.add_parser("sweep", help="sweep one axis, emit CSV rows")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", choices=harness.SWEEP_AXES, required=True)
    p_sweep.add_argument("--values", type=str, required=True,
                         help="comma-separated axis values")

    p_scan = sub.add_parser("scan", help="array-receiver scan over all combiner beams")
    _add_common(p_scan)
    p_scan.add_argument("--n-rx", type=int, default=16, help="receive beams N_r")
    p_scan.add_argument("--rf-rx", type=int, default=1, help="receive RF chains")
    p_scan.add_argument("--path", action="append", default=[],
                        metavar="AOA,AOD,RE[,IM]",
                        help="on-grid path; repeatable")

    p_self = sub.add_parser("selftest", help="formula-vs-oracle verification suite")
    _add_common(p_self)

    return parser


def _build_config(args) -> harness.ExperimentConfig:
    if args.config is not None:
        cfg = harness.load_config(args.config)
    else:
        cfg = harness.ExperimentConfig()
    overrides = {}
    for attr, name in (
        ("n", "n_antennas"), ("m", "m_sets"), ("l", "n_graphs"), ("k", "k_paths"),
        ("r", "n_rf_chains"), ("snr", "snr_db"), ("trials", "trials"),
        ("seed", "seed"), ("threads", "threads"), ("mode", "mode"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[name] = value
    return cfg.derive(**overrides) if overrides else cfg


def cmd_theory(args) -> int:
    n = args.n if args.n is not None else 128
    m = args.m if args.m is not None else 16
    k = args.k if args.k is not None else 2
    l = args.l if args.l is not None else 1
    lam = theory.nm_graph_prob(n, m, k)
    p = theory.success_prob(lam, l)
    l_req = theory.required_graphs(lam, args.p0) if lam < 1 else 1
    bound = theory.sample_complexity_bound(k, args.p0, args.log_base)
    print(f"N={n} M={m} L={l} K={k} T=2ML={2 * m * l}")
    print(f"lambda     = {float(lam):.6f}  ({lam.numerator}/{lam.denominator})")
    print(f"p          = {float(p):.6f}  ({float(p) * 100:.4f}%)")
    print(f"L_required = {l_req}  (p0={args.p0:g})")
    print(f"T_bound    = {bound.t_min:.4f}  "
          f"[f={bound.f:.6f} h={bound.h:.6f} c={bound.c:.6f} {args.log_base}]")
    if args.out:
        row = theory.theory_row(n, m, l, k, args.p0, args.log_base)
        header = ",".join(row)
        values = ",".join(f"{v:.10g}" if isinstance(v, float) else str(v)
                          for v in row.values())
        Path(args.out).write_text(header + "\n" + values + "\n")
    return 0


def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    if getattr(args, "ensemble", None):
        cfg = cfg.derive(ensemble_file=args.ensemble)
    if getattr(args, "save_ensemble", None):
        from .encoder import save_ensemble

        cfg = cfg.derive(fixed_ensemble=True)
        ens, matrix = harness.pinned_ensemble(cfg)
        save_ensemble(ens, matrix.modulation, args.save_ensemble)
    row = harness.simulate(cfg)
    print(f"mode={row.mode} N={row.n} M={row.m} L={row.l} K={row.k} T={row.t} "
          f"snr_db={row.snr_db} trials={row.trials} seed={row.seed} "
          f"convention={cfg.convention}")
    print(f"success_rate = {row.success_rate:.6f}")
    if row.theory_p is not None:
        print(f"theory_p     = {row.theory_p:.6f}")
    print(f"nmse         = {row.nmse:.6g}")
    print(f"bf_gain      = {row.bf_gain:.6g}  (upper bound N={row.n})")
    print(f"wall_ms      = {row.wall_ms:.0f}")
    if args.out:
        harness.write_csv([row], args.out, cfg, include_timing=args.timing)
    return 0


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one axis value")
    typed = [float(v) if args.axis == "snr" else int(v) for v in values]
    rows = harness.sweep(cfg, args.axis, typed)
    csv_text = harness.rows_to_csv(rows, include_timing=args.timing)
    if args.out:
        harness.write_csv(rows, args.out, cfg, include_timing=args.timing)
    sys.stdout.write(csv_text)
    return 0


def _parse_path(text: str):
    parts = text.split(",")
    if len(parts) not in (3, 4):
        raise ConfigError(f"path {text!r} must be AOA,AOD,RE[,IM]")
    aoa, aod = int(parts[0]), int(parts[1])
    re = float(parts[2])
    im = float(parts[3]) if len(parts) == 4 else 0.0
    return aoa, aod, complex(re, im)


def cmd_scan(args) -> int:
    scan = harness.ScanConfig(
        n_tx=args.n if args.n is not None else 128,
        n_rx=args.n_rx,
        rf_tx=args.r if args.r is not None else 8,
        rf_rx=args.rf_rx,
        m_sets=args.m if args.m is not None else 16,
        n_graphs=args.l if args.l is not None else 2,
        paths=tuple(_parse_path(p) for p in args.path),
        snr_db=args.snr,
        mode=args.mode or "noiseless",
        seed=args.seed if args.seed is not None else 0,
    )
    result = harness.scan_array_receiver(scan)
    print(f"scanned {scan.n_rx} receive beams, {result.total_measurements} "
          f"measurements total")
    if result.no_path:
        print("no path detected (all magnitudes zero)")
    else:
        i, j = result.best_pair
        print(f"best beam pair: receive {i}, transmit {j} "
              f"(|G|={result.magnitudes[i, j]:.6g})")
    if args.out:
        np.savetxt(args.out, result.magnitudes, delimiter=",", fmt="%.10g")
    return 0


def cmd_selftest(args) -> int:
    failures = 0

    def check(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
        failures += 0 if ok else 1

    table = [
        (16, 1, "94.4882"), (8, 2, "98.6050"), (4, 4, "99.6450"), (2, 8, "99.6333"),
    ]
    for m, l, expected in table:
        p = theory.success_prob(theory.nm_graph_prob(128, m, 2), l)
        got = f"{float(p) * 100:.4f}"
        check(f"tradeoff table M={m} L={l}", got == expected, f"{got}% vs {expected}%")

    ok = True
    for n in range(2, 13):
        for m in range(1, n + 1):
            if n % m:
                continue
            for k in range(1, m + 1):
                sizes = theory.balanced_set_sizes(n, m)
                part = []
                start = 0
                for size in sizes:
                    part.append(list(range(start, start + size)))
                    start += size
                if theory.nm_graph_prob(n, m, k) != theory.oracle_nm_prob(n, m, k, part):
                    ok = False
    check("formula equals enumeration oracle for N<=12, M|N", ok)

    eps_compat = DetectorConfig(false_alarm=DEFAULT_FALSE_ALARM,
                                calibration_mode="paper-compat").threshold(4.0)
    check("paper-compat threshold is 3*sigma", abs(eps_compat - 6.0) < 1e-12)

    bound = theory.sample_complexity_bound(10**4)
    check("f(K,K) approaches 1/e", abs(bound.f - float(np.exp(-1))) < 1e-3)
    check("base-2 h limit reproduces 1.51", abs(bound.h_limit - 1.51) < 0.01)

    print(f"{'OK' if failures == 0 else f'{failures} failure(s)'}")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    handlers = {
        "theory": cmd_theory,
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "scan": cmd_scan,
        "selftest": cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BeamAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
