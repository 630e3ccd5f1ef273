"""Command-line entry point: ``sliceq run|compare|robustness|dump-qtable|show-config``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ALGORITHMS, ConfigError, ScenarioConfig, dump_scenario, load_scenario
from . import harness

log = logging.getLogger("sliceq")


def parse_seeds(text: str) -> list[int]:
    """``"1..20"`` (inclusive) or ``"1,2,5"``."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _load_config(args) -> ScenarioConfig:
    text = Path(args.config).read_text() if args.config else ""
    config = load_scenario(text)
    if getattr(args, "seed", None) is not None:
        config = config.replace(seed=args.seed)
    if getattr(args, "algorithm", None):
        config = config.with_agent(algorithm=args.algorithm)
    return config


def _progress(algo, seed, result):
    log.info("%s seed=%d done in %.1fs", algo, seed, result.wall_time)


def _write_text(text: str, out) -> None:
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc
    else:
        sys.stdout.write(text)


def cmd_run(args) -> None:
    config = _load_config(args)
    trace_fh = open(args.trace, "w", newline="") if args.trace else None
    try:
        result = harness.run(config, trace=trace_fh)
    finally:
        if trace_fh:
            trace_fh.close()
    _emit(result, args)


def cmd_compare(args) -> None:
    config = _load_config(args)
    report = harness.compare(config, args.algorithms, args.seeds, progress=_progress)
    if args.format == "json":
        _write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    else:
        _write_text(harness.comparison_summary(report), args.out)


def cmd_robustness(args) -> None:
    config = _load_config(args)
    report = harness.robustness(config, args.seeds, progress=_progress)
    if args.format == "json":
        _write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    else:
        _write_text(harness.robustness_summary(report), args.out)


def cmd_dump_qtable(args) -> None:
    config = _load_config(args)
    agents = []
    harness.run(config, agent_out=agents)
    tables = agents[0].tables()
    if not 0 <= args.table < len(tables):
        raise ValueError(f"--table {args.table} out of range; agent has {len(tables)} table(s)")
    _write_text(tables[args.table].dumps(), args.out)


def cmd_show_config(args) -> None:
    _write_text(dump_scenario(_load_config(args)), args.out)


def _emit(result, args) -> None:
    if args.out:
        harness.emit(result, args.out, args.format)
    else:
        if args.format == "csv":
            sys.stdout.write(harness.result_csv(result))
        else:
            for k, v in harness.final_window(result).items():
                sys.stdout.write(f"{k}={v:.6f}\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sliceq", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds: bool = False):
        sp.add_argument("--config", help="YAML scenario file (default: built-in scenario)")
        if seeds:
            sp.add_argument("--seeds", type=parse_seeds, default=parse_seeds("1..20"),
                            help="seed range a..b (inclusive) or comma list")
        else:
            sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--out", help="output path (default: stdout)")

    sp = sub.add_parser("run", help="train one agent and emit per-episode metrics")
    common(sp)
    sp.add_argument("--algorithm", choices=ALGORITHMS)
    sp.add_argument("--format", choices=("csv", "summary"), default="csv")
    sp.add_argument("--trace", help="write a per-TTI CSV trace to this path")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="compare algorithms over paired seeds")
    common(sp, seeds=True)
    sp.add_argument("--algorithms", type=lambda s: [a.strip() for a in s.split(",")],
                    default=["q_learning", "double_q", "self_play_ensemble"])
    sp.add_argument("--format", choices=("summary", "json"), default="summary")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("robustness", help="clean vs corrupted-table experiment")
    common(sp, seeds=True)
    sp.add_argument("--format", choices=("summary", "json"), default="summary")
    sp.set_defaults(func=cmd_robustness)

    sp = sub.add_parser("dump-qtable", help="train one agent and dump a Q-table")
    common(sp)
    sp.add_argument("--algorithm", choices=ALGORITHMS)
    sp.add_argument("--table", type=int, default=0)
    sp.set_defaults(func=cmd_dump_qtable)

    sp = sub.add_parser("show-config", help="print the effective scenario as YAML")
    common(sp)
    sp.add_argument("--algorithm", choices=ALGORITHMS)
    sp.set_defaults(func=cmd_show_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"sliceq: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
