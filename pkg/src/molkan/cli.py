"""Command-line entry point: ``molkan {train,bench-kan,verify,split-stats}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .bench import bench_kan_variants, format_table, rows_to_dicts
from .data import DatasetError, load_csv_dataset
from .experiment import ConfigError, ExperimentConfig, run_experiment, split_stats
from .mpnn import HEAD_KINDS, HOSTS, UPDATE_KINDS
from .training import dumps
from .verify import CHECKS, run_verify


def _train(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    overrides = {"epochs": args.epochs, "host": args.host, "update_kind": args.update,
                 "head_kind": args.head, "output_path": args.output}
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    result = run_experiment(cfg)
    s = result.summary
    metric = result.runs[0].metric if result.runs else "metric"
    std = "n/a" if s["std"] is None else f"{s['std']:.4f}"
    mean = "n/a" if s["mean"] is None else f"{s['mean']:.4f}"
    print(f"test {metric}: {mean} +/- {std} over {s['n']} seed(s); reports in {cfg.output_path}")
    return 1 if result.failures and not result.runs else 0


def _bench(args) -> int:
    rows = bench_kan_variants(n_in=args.n, batch=args.batch, M=args.M, G=args.G, k=args.k,
                              repeats=args.repeats, seed=args.seed)
    print(json.dumps(rows_to_dicts(rows), indent=2) if args.json else format_table(rows))
    return 0


def _verify(args) -> int:
    results = run_verify(args.only or None)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _split_stats(args) -> int:
    dataset = load_csv_dataset(args.dataset)
    sys.stdout.write(dumps(split_stats(dataset)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="molkan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="multi-seed training run from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--host", choices=HOSTS)
    p.add_argument("--update", choices=UPDATE_KINDS)
    p.add_argument("--head", choices=HEAD_KINDS)
    p.add_argument("--output", help="output directory (overrides output_path)")
    p.set_defaults(func=_train)

    p = sub.add_parser("bench-kan", help="time one layer of each KAN family")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--G", type=int, default=8)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_bench)

    p = sub.add_parser("verify", help="gradient checks and invariant suites")
    p.add_argument("--only", nargs="*", choices=list(CHECKS))
    p.set_defaults(func=_verify)

    p = sub.add_parser("split-stats", help="scaffold group histogram of a dataset")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=_split_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, FileNotFoundError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
