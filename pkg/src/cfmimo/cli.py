"""Command line entry point: ``cfmimo run|sweep|validate``."""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .errors import CfmimoError, ConfigurationError
from .harness.config import dump_config, load_config
from .harness.runner import default_workers, is_infeasible, run_scenario, sweep

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise ConfigurationError(f"override {p!r} is not key=value")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cfmimo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("config", help="scenario YAML file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config field (repeatable)")

    p = sub.add_parser("run", help="run one scenario")
    common(p)
    p.add_argument("-o", "--out", default="results", help="output directory")
    p.add_argument("-j", "--workers", type=int, default=None,
                   help="parallel drops (default: $CFMIMO_WORKERS or 1)")

    p = sub.add_parser("sweep", help="run one scenario per value of a config field")
    common(p)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("-o", "--out", default="results")
    p.add_argument("-j", "--workers", type=int, default=None)

    p = sub.add_parser("validate", help="check a config and print the resolved values")
    common(p)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args.overrides))
        if args.verb == "validate":
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        workers = args.workers if args.workers is not None else default_workers()
        if args.verb == "run":
            results = [run_scenario(cfg, workers=workers, out_dir=args.out)]
        else:
            values = [yaml.safe_load(v) for v in args.values]
            results = sweep(cfg, args.axis, values, workers=workers, out_dir=args.out)
        for agg in results:
            s = agg.summary()
            print(f"drops={s['n_ok']}/{s['n_drops']} mean_rate={s['rate_bps']['mean']} "
                  f"p10={s['rate_bps']['p10']} ee={s['ee_mean']}")
        return EXIT_INFEASIBLE if any(is_infeasible(a) for a in results) else EXIT_OK
    except CfmimoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - last-resort CLI guard
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
