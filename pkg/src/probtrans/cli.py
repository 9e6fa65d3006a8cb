"""Command line entry point ``bench``.

    bench run --config cfg.json --out results/
    bench scenario --kind sphere --seed 7 --dump data.json
    bench frontier --metrics results/metrics.csv --out frontier.svg
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import ConfigError
from .experiments import (
    DEFAULT_LAMBDAS,
    emit_outputs,
    failed_seed_fraction,
    frontier,
    load_config,
    plot_frontier,
    preset_config,
    read_metrics,
    run_benchmark,
    summarize,
)
from .scenarios import SCENARIOS, make_scenario

log = logging.getLogger("probtrans")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED_SEEDS = 0, 1, 2
MAX_FAILED_FRACTION = 0.2


def _cmd_run(args):
    cfg = load_config(args.config) if args.config else preset_config(args.preset)
    if args.out:
        cfg.output_dir = args.out

    def report(rows):
        for r in rows:
            status = "FAILED " + r.error if r.failed else f"mse={r.mse:.4g} d_K={r.d_k:.3g}"
            log.info("seed %d %-13s %s", r.seed, r.model, status)

    rows = run_benchmark(cfg, progress=report)
    paths = emit_outputs(rows, cfg)
    for s in summarize(rows):
        print(f"{s['model']:>13}: mse {s['mse_mean']:.4g} +- {s['mse_std']:.2g}   "
              f"d_K {s['d_k_mean']:.3g} +- {s['d_k_std']:.2g}   ratio {s['mse_ratio_mean']:.3g}")
    print("wrote " + ", ".join(sorted(paths.values())))
    frac = failed_seed_fraction(rows)
    if frac > MAX_FAILED_FRACTION:
        print(f"{frac:.0%} of seeds failed", file=sys.stderr)
        return EXIT_FAILED_SEEDS
    return EXIT_OK


def _cmd_scenario(args):
    sc = make_scenario(args.kind, np.random.default_rng(args.seed), args.train_size, args.test_size)
    with open(args.dump, "w") as f:
        json.dump({"seed": args.seed, **sc.to_dict()}, f)
    print(f"wrote {args.kind} scenario ({len(sc.train_x)} train / {len(sc.test_x)} test) to {args.dump}")
    return EXIT_OK


def _cmd_frontier(args):
    rows = read_metrics(args.metrics)
    lambdas = [float(v) for v in args.lambdas.split(",")] if args.lambdas else list(DEFAULT_LAMBDAS)
    points = frontier(summarize(rows), lambdas)
    plot_frontier(points, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="bench", description="Constrained-output regression benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-seed results")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and score all models over the configured seeds")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment JSON file")
    src.add_argument("--preset", choices=SCENARIOS, help="use the built-in settings for a scenario")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("scenario", help="dump one generated dataset as JSON")
    s.add_argument("--kind", required=True, choices=SCENARIOS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--train-size", type=int, default=None)
    s.add_argument("--test-size", type=int, default=100)
    s.add_argument("--dump", required=True, help="output JSON path")
    s.set_defaults(func=_cmd_scenario)

    fr = sub.add_parser("frontier", help="plot combined scores from a metrics CSV")
    fr.add_argument("--metrics", required=True)
    fr.add_argument("--out", required=True, help="output SVG path")
    fr.add_argument("--lambdas", help="comma-separated weights in [0, 1]")
    fr.set_defaults(func=_cmd_frontier)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
