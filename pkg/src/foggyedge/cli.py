"""``foggyedge-sim`` command-line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import MODES, ConfigError, ScenarioConfig, parse_rates, load_config
from .harness import read_csv, run_scenario, sweep
from .network import InvariantViolation, read_trace

EXIT_OK, EXIT_DIFF, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    over = {}
    if getattr(args, "mode", None):
        over["scenario_mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        over["scenario_seed"] = args.seed
    if getattr(args, "rate", None) is not None:
        over["scenario_rate"] = args.rate
    if getattr(args, "duration", None) is not None:
        over["scenario_duration_s"] = args.duration
    return cfg.replace(**over).validate() if over else cfg


def _rates(text: str) -> list[float]:
    try:
        return parse_rates(text)
    except ValueError:
        raise ConfigError(f"--rates: cannot read {text!r}") from None


def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    report = run_scenario(cfg, out_dir=out)
    sys.stdout.write(report.text())
    if args.emit_plot:
        from .plot import emit_plot
        emit_plot([report.row()], out / "csd.svg")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rates = _rates(args.rates) if args.rates else list(cfg.scenario_rates)
    cfg.replace(scenario_rates=tuple(rates)).validate()
    out = Path(args.out)
    res = sweep(cfg, rates, out_dir=out, workers=args.workers)
    sys.stdout.write(res.table())
    if args.emit_plot:
        from .plot import emit_plot
        emit_plot(read_csv(out / "summary.csv"), out / "csd.svg")
    return EXIT_OK


def cmd_trace_diff(args) -> int:
    a, b = Path(args.a).read_bytes(), Path(args.b).read_bytes()
    if a == b:
        print(f"identical ({len(a)} bytes)")
        return EXIT_OK
    ra, rb = read_trace(a), read_trace(b)
    for k, (x, y) in enumerate(zip(ra, rb)):
        if x != y:
            print(f"first difference at record {k}:\n  a: {x}\n  b: {y}")
            break
    else:
        print(f"record counts differ: {len(ra)} vs {len(rb)}")
    return EXIT_DIFF


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foggyedge-sim",
                                description="Vehicular edge/fog/cloud offloading simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--config", help="scenario file of 'section.key = value' lines")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--seed", type=int)
    r.add_argument("--rate", type=float, help="requests per second")
    r.add_argument("--duration", type=float, help="simulated seconds")
    r.add_argument("--out", default="out")
    r.add_argument("--emit-plot", action="store_true", help="also write csd.svg")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="all three modes at every rate")
    s.add_argument("--config")
    s.add_argument("--rates", help="e.g. 1..10 or 1,2,5")
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float)
    s.add_argument("--out", default="out")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--emit-plot", action="store_true")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("trace-diff", help="compare two trace.bin files")
    d.add_argument("a")
    d.add_argument("b")
    d.set_defaults(func=cmd_trace_diff)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        for problem in e.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
