"""Command-line interface: train, eval, sweep, verify.

Exit codes by category: 0 success, 2 configuration error, 3 checkpoint
error, 4 training divergence, 5 campaign/verification failure, 1 anything
unexpected.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, load_config, serialize_config
from .harness import CampaignError, evaluate, run_campaign
from .qfunc import CheckpointError, TrainingDivergenceError
from .selfcheck import run_all

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_DIVERGENCE = 4
EXIT_RUNTIME = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopmanip",
        description="Train and evaluate cooperative two-arm learners (independent or Nash-equilibrium driven Q-learning).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a multi-seed training campaign")
    train.add_argument("config", help="YAML experiment config")
    train.add_argument("--seeds", help="comma-separated seed override, e.g. 0,1,2")
    train.add_argument("--out-dir", help="output directory override")
    train.add_argument("--workers", type=int, default=1, help="parallel seed workers")
    train.add_argument("--quiet", action="store_true", help="suppress progress output")

    ev = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    ev.add_argument("checkpoint", help="pair checkpoint (.npz) written by train")
    ev.add_argument("config", help="YAML experiment config matching the checkpoint")
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--seed", type=int, default=0)

    sweep = sub.add_parser("sweep", help="grid over one config field")
    sweep.add_argument("config")
    sweep.add_argument("--param", required=True, help="dotted config path, e.g. reward.kappa1")
    sweep.add_argument("--values", required=True, help="comma-separated values (YAML-typed)")
    sweep.add_argument("--out-dir", help="base output directory override")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--quiet", action="store_true")

    verify = sub.add_parser("verify", help="run the standalone solver/oracle property suites")
    verify.add_argument("--quick", action="store_true", help="smaller sample sizes")
    return parser


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seeds:
        cfg = cfg.replace("run.seeds", [int(s) for s in args.seeds.split(",")])
    if args.out_dir:
        cfg = cfg.replace("output.out_dir", args.out_dir)
    summary = run_campaign(cfg, workers=args.workers, quiet=args.quiet)
    if not args.quiet:
        print(
            f"campaign done: {len(summary.seeds)} seeds x {summary.n_episodes} episodes, "
            f"final success ratio {summary.final_success_ratio:.3f}, "
            f"outputs in {cfg.out_dir}"
        )
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    ratio, mean_return = evaluate(
        args.checkpoint, cfg, n_eval_episodes=args.episodes, rng=np.random.default_rng(args.seed)
    )
    print(f"success_ratio={ratio:.4f} mean_return={mean_return:.4f} episodes={args.episodes}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    base_dir = Path(args.out_dir) if args.out_dir else Path(cfg.out_dir)
    values = [yaml.safe_load(tok) for tok in args.values.split(",")]
    rows = []
    for value in values:
        label = f"{args.param}={value}"
        point = cfg.replace(args.param, value).replace("output.out_dir", str(base_dir / label))
        summary = run_campaign(point, workers=args.workers, quiet=args.quiet)
        rows.append(
            {
                "value": value,
                "final_success_ratio": summary.final_success_ratio,
                "final_success_per_seed": [float(v) for v in summary.final_success_per_seed],
                "out_dir": str(base_dir / label),
            }
        )
        if not args.quiet:
            print(f"{label}: final success ratio {summary.final_success_ratio:.3f}")
    base_dir.mkdir(parents=True, exist_ok=True)
    (base_dir / "sweep_summary.yaml").write_text(
        yaml.safe_dump({"param": args.param, "points": rows}, sort_keys=False)
    )
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_all(quick=args.quick)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: {res.detail} ({res.seconds:.2f}s)")
        failed += not res.passed
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return EXIT_RUNTIME
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"train": _cmd_train, "eval": _cmd_eval, "sweep": _cmd_sweep, "verify": _cmd_verify}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingDivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (CampaignError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - safety net
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    raise SystemExit(main())
