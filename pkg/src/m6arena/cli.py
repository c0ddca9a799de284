"""Command-line entry point: ``m6arena --cmd <command> --seed N [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .errors import M6ArenaError

COMMANDS = ("calibrate-market", "calibrate-theta", "test-sharpe", "solve-policy",
            "run-arena", "leaderboard", "empirics", "reproduce-all")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="m6arena", description=__doc__)
    p.add_argument("--cmd", required=True, choices=COMMANDS)
    p.add_argument("--seed", required=True, type=int, help="master random seed (required)")
    p.add_argument("--out", type=Path, default=Path("m6arena_out"), help="output directory")
    p.add_argument("--prices", type=Path, help="CSV with header date,asset_id,close")
    p.add_argument("--submissions", type=Path,
                   help="CSV with header team_id,interval,asset_id,weight")
    p.add_argument("--config", type=Path, help="market model in key=value form")
    p.add_argument("--reps", type=int, help="arena replications (overrides the scale preset)")
    p.add_argument("--alpha", type=_floats, default=(0.01, 0.05, 0.1),
                   help="comma-separated test levels")
    p.add_argument("--q", type=_ints, default=(1, 20), help="comma-separated target ranks")
    p.add_argument("--desk-scale", action="store_true",
                   help="reduced replication counts (default is the full scale)")
    p.add_argument("--annual-return", type=float,
                   help="annual mean return used by calibrate-market instead of the sample mean")
    p.add_argument("--strict", action="store_true",
                   help="fail on gross-exposure violations in submissions")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> pipeline.RunConfig:
    cfg = pipeline.RunConfig(
        seed=args.seed, out=args.out, prices=args.prices, submissions=args.submissions,
        alphas=args.alpha, qs=args.q, reps=args.reps, strict=args.strict,
        scale=pipeline.DESK if args.desk_scale else pipeline.FULL,
        annual_return=args.annual_return,
    )
    if args.config is not None:
        cfg = pipeline.with_model_config(cfg, args.config)
    if args.reps is not None and args.reps < 1:
        raise M6ArenaError("--reps must be >= 1")
    return replace(cfg, out=Path(args.out))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        if args.cmd == "reproduce-all":
            path = pipeline.reproduce_all(cfg)
            print(path)
            return 0
        fn, _ = pipeline.STAGES[args.cmd]
        for path in fn(cfg, pipeline.load_data(cfg)):
            print(path)
    except M6ArenaError as exc:
        print(f"m6arena: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
