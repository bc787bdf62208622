"""Command-line entry point: ``vanhove <experiment> [--config FILE] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from .generator import WindowError
from .harness import EXPERIMENTS, NumericalError, check_records, run_experiments, with_seed, write_records

EXIT_OK, EXIT_CONFIG, EXIT_WINDOW, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4, 5

log = logging.getLogger("vanhove")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vanhove", description="Weak-coupling-limit experiments on finite baths.")
    p.add_argument("experiment", choices=EXPERIMENTS + ("all",))
    p.add_argument("--config", help="TOML file; defaults reproduce the reference runs")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--workers", type=int, default=1, help="processes for independent lambda cells")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--format", choices=("csv", "json"), help="overrides output.format")
    p.add_argument("--check", action="store_true", help="exit 5 if an acceptance threshold fails")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = with_seed(load_config(args.config), args.seed)
        out = cfg.output
        cfg = replace(cfg, output=replace(out, dir=args.out or out.dir, format=args.format or out.format))
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    experiments = list(EXPERIMENTS) if args.experiment == "all" else [args.experiment]
    try:
        records = run_experiments(cfg, experiments, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WindowError as exc:
        print(f"window violation: {exc}", file=sys.stderr)
        return EXIT_WINDOW
    except (NumericalError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = write_records(records, f"{cfg.output.dir}/{args.experiment}.{cfg.output.format}", cfg.output.format)
    log.info("wrote %d records to %s", len(records), path)
    if args.check:
        results = check_records(records, cfg)
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        if not all(r.passed for r in results):
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
