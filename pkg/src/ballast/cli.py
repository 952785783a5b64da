"""``ballast`` command line: run experiments, print bound reports and φ_d."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .analysis import compute_phi, predicted_bounds
from .errors import BallastError, ConfigError, InvalidParameter
from .experiment import apply_overrides, clique_note, parse_config, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = apply_overrides(parse_config(text), args.trials, args.seed, args.out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    note = clique_note(config.graph)
    if note:
        logging.getLogger("ballast").info(note)
    try:
        result = run_experiment(config, workers=args.workers)
    except BallastError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    s = result.summary
    if s is not None:
        ml = s["max_load"]
        print(
            f"{config.name}: {len(result.trials)} trials, max_load median {ml['median']} "
            f"(p10 {ml['p10']}, p90 {ml['p90']}, min {ml['min']}, max {ml['max']}), "
            f"gap median {s['gap']['median']:.4f}"
        )
    for t in result.failed:
        print(f"trial {t.trial_index} (seed {t.seed}) failed: {t.error}", file=sys.stderr)
    return EXIT_RUNTIME if result.failed else EXIT_OK


def _cmd_bounds(args) -> int:
    try:
        rep = predicted_bounds(args.n, delta=args.delta, d=args.d, c_groups=args.c, h=args.h, epsilon=args.epsilon)
    except InvalidParameter as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(rep.to_dict(), indent=2) if args.json else rep.render())
    return EXIT_OK


def _cmd_phi(args) -> int:
    try:
        phi = compute_phi(args.d, args.tolerance)
    except InvalidParameter as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{float(phi):.12f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ballast", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int, help="base seed; trial i uses seed + i")
    run.add_argument("--out-dir", help="write <name>.csv and <name>.json here")
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=_cmd_run)

    bounds = sub.add_parser("bounds", help="evaluate the max-load bound formulas")
    bounds.add_argument("--n", type=int, required=True)
    bounds.add_argument("--delta", type=int)
    bounds.add_argument("--d", type=int)
    bounds.add_argument("--c", type=int, default=2)
    bounds.add_argument("--h", type=int)
    bounds.add_argument("--epsilon", type=float)
    bounds.add_argument("--json", action="store_true")
    bounds.set_defaults(func=_cmd_bounds)

    phi = sub.add_parser("phi", help="growth rate of the d-step Fibonacci sequence")
    phi.add_argument("--d", type=int, required=True)
    phi.add_argument("--tolerance", type=float, default=1e-12)
    phi.set_defaults(func=_cmd_phi)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
