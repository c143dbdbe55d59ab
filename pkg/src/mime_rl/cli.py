"""Command line: ``mime-rl run|compare|replay``.

Exit status is 0 on success, 1 if any run errored, a comparison check failed,
or a replay diverged, and 2 for unusable input (bad config, bad flags).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .harness import compare_methods, replay, run_experiment


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def _apply_flags(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seeds is not None:
        changes["seeds"] = args.seeds
    if args.budget is not None:
        changes["budget"] = args.budget
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    return cfg.replace(**changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mime-rl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", type=Path, help="YAML experiment config")
        p.add_argument("--seeds", type=_seeds, help="comma-separated seeds, e.g. 0,1,2")
        p.add_argument("--budget", type=int, help="environment steps per seed")
        p.add_argument("--out", type=Path, help="output root directory")
        p.add_argument("--serial", action="store_true", help="run seeds one after another in this process")

    common(sub.add_parser("run", help="train every seed of one config"))
    cmp_ = sub.add_parser("compare", help="run several intrinsic methods on identical seeds")
    common(cmp_)
    cmp_.add_argument("--methods", required=True, help="comma-separated method kinds, e.g. none,surprisal,mime")
    rep = sub.add_parser("replay", help="rerun a finished run and check its metrics digests")
    rep.add_argument("run_dir", type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            if not (args.run_dir / "config.yaml").exists():
                print(f"error: {args.run_dir} has no config.yaml", file=sys.stderr)
                return 2
            report = replay(args.run_dir)
            for seed, ok in sorted(report.matches.items()):
                print(f"seed {seed}: {'match' if ok else 'MISMATCH'} {report.replayed[seed][:16]}")
            return 0 if report.ok else 1
        cfg = _apply_flags(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        result = run_experiment(cfg, serial=args.serial)
        for r in result.runs:
            found = r.steps_to_first_reward if r.steps_to_first_reward is not None else "censored"
            print(f"seed {r.seed}: steps {r.steps} first_reward {found} digest {r.digest()[:16]}"
                  + (f" ERROR {r.error}" if r.error else ""))
        print(f"run directory: {result.run_dir}")
        return 1 if result.errored else 0

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    try:
        comp = compare_methods(cfg, methods, serial=args.serial)
    except (ValueError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(comp.table(), end="")
    return 0 if comp.ok else 1


if __name__ == "__main__":
    sys.exit(main())
