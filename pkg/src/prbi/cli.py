"""Command-line entry point: ``prbi {simulate,sweep,theory,trace,calibrate}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from prbi import harness, theory
from prbi.config import ConfigError, load_config
from prbi.core import Rounding
from prbi.fleet import WorldConfig, calibrate

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _out_dir(path: str | None) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out: Path | None, name: str, text: str) -> None:
    if out is not None:
        (out / name).write_text(text)


def _scenario(args) -> harness.ScenarioConfig:
    config = load_config(args.config)
    try:
        if args.seed is not None:
            config = replace(config, world=replace(config.world, seed=args.seed))
        if args.replicates is not None:
            config = replace(config, replicates=args.replicates)
        if args.method is not None:
            config = replace(config, method=args.method)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def _parse_values(raw: str, axis: str) -> list:
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if not items:
        raise ConfigError("--values must list at least one value")
    if axis == "rounding":
        return [Rounding(v).value for v in items]
    if axis in ("window_size", "attack_period", "n"):
        return [int(v) for v in items]
    return [float(v) for v in items]


def cmd_simulate(args) -> int:
    config = _scenario(args)
    logs, report = harness.run_scenario(config, args.workers)
    out = _out_dir(args.out)
    _write(out, "frames.csv", harness.frames_csv(logs))
    _write(out, "report.json", harness.reports_json([report]) + "\n")
    print(harness.reports_csv([report]), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _scenario(args)
    if args.axis not in harness.SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {args.axis!r}; expected one of {', '.join(harness.SWEEP_AXES)}")
    try:
        values = _parse_values(args.values, args.axis)
        configs = [harness.with_axis(config, args.axis, v) for v in values]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    reports = [harness.run_scenario(c, args.workers)[1] for c in configs]
    out = _out_dir(args.out)
    text = harness.reports_csv(reports, args.axis, values)
    _write(out, "sweep.csv", text)
    _write(out, "sweep.json", harness.reports_json(reports, args.axis, values) + "\n")
    print(text, end="")
    return EXIT_OK


def cmd_theory(args) -> int:
    if args.max_n < 2:
        raise ConfigError("--max-n must be >= 2")
    checks = theory.run_theory_checks(args.max_n)
    print(theory.format_checks(checks))
    out = _out_dir(args.out)
    rows = [(c.name, "pass" if c.passed else "fail", c.detail) for c in checks]
    _write(out, "theory.csv", harness.series_csv(["check", "result", "detail"], rows))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_RUNTIME


def cmd_trace(args) -> int:
    n, k = args.n, args.k
    if n < 2 or not 0 <= k <= n - 1:
        raise ConfigError(f"need n >= 2 and 0 <= k <= n - 1, got n={n}, k={k}")
    if args.frames < 1:
        raise ConfigError("--frames must be >= 1")
    if args.kind == "m":
        series = harness.trace_convergence(n, k, Rounding(args.rounding), args.frames, args.seed or 0)
        target = theory.convergence_target(n, k, Rounding(args.rounding)) if k else 0.0
        rows = [(i + 1, m, target) for i, m in enumerate(series)]
        text = harness.series_csv(["frame", "m", "target"], rows)
    else:
        series = harness.trace_probabilities(n, k, args.frames, args.seed or 0)
        rows = [(i + 1, *p) for i, p in enumerate(series)]
        text = harness.series_csv(["frame"] + [f"vehicle_{j}" for j in range(n)], rows)
    out = _out_dir(args.out)
    _write(out, f"trace_{args.kind}.csv", text)
    if out is None:
        print(text, end="")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.config:
        config = load_config(args.config)
        world, epsilon = config.world, config.prbi.epsilon
    else:
        world, epsilon = WorldConfig(5), 0.35
    if args.seed is not None:
        world = replace(world, seed=args.seed)
    if args.frames < 1:
        raise ConfigError("--frames must be >= 1")
    cal = calibrate(world, args.frames, epsilon)
    edges, benign, adversarial = cal.histogram(args.bins)
    rows = [(edges[i], edges[i + 1], benign[i], adversarial[i]) for i in range(len(benign))]
    out = _out_dir(args.out)
    _write(out, "calibration.csv", harness.series_csv(["bin_lo", "bin_hi", "benign", "adversarial"], rows))
    summary = {
        "frames": args.frames,
        "epsilon": epsilon,
        "benign_mean": cal.benign_mean,
        "benign_pass_rate": cal.benign_pass_rate,
        "adversarial_mean": float(cal.adversarial.mean()),
        "adversarial_fail_rate": cal.adversarial_fail_rate,
        "separated": cal.separated(),
    }
    summary = {k: harness._json_value(v) for k, v in summary.items()}
    _write(out, "calibration.json", json.dumps(summary, indent=2) + "\n")
    for key, value in summary.items():
        print(f"{key}: {value}")
    return EXIT_OK if cal.separated() else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prbi", description="PRBI fleet simulator and theory checks")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML/JSON scenario file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--replicates", type=int, help="override the replicate count")
        p.add_argument("--method", choices=harness.METHODS, help="override the defense method")
        p.add_argument("--workers", type=int, help=f"worker processes (capped by {harness.THREADS_ENV})")

    p = sub.add_parser("simulate", help="run one scenario; writes frames.csv and report.json")
    scenario_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a scenario over values of one parameter")
    scenario_flags(p)
    p.add_argument("--axis", required=True, help=f"one of {', '.join(harness.SWEEP_AXES)}")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("theory", help="check closed forms against brute-force oracles")
    p.add_argument("--out", help="output directory")
    p.add_argument("--max-n", type=int, default=12, help="largest fleet size to enumerate (<= 20)")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("trace", help="emit an m or malicious-probability series")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--rounding", choices=[r.value for r in Rounding], default=Rounding.FLOOR.value)
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--kind", choices=("m", "probabilities"), default="m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: print CSV)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("calibrate", help="benign vs attacked inter-frame Jaccard histograms")
    p.add_argument("--config", help="YAML/JSON scenario file (default: n=5 defaults)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
