"""Command line entry point: ``tensorhbf run`` and ``tensorhbf plotdata``."""

import argparse
import logging
import sys

from .experiment import ConfigError, PlotDataError, emit_plotdata, format_summary, load_config, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="tensorhbf", description="Hybrid beamforming experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte-Carlo experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--out", help="results CSV (overrides the config)")
    r.add_argument("--seed", type=int, help="master seed (overrides the config)")
    r.add_argument("--jobs", type=int, help="worker processes")

    d = sub.add_parser("plotdata", help="per-method two-column files from a results CSV")
    d.add_argument("csv")
    d.add_argument("--metric", choices=("se", "nmse"), default="se")
    d.add_argument("--outdir")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        try:
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.jobs is not None and args.jobs < 1:
                raise ConfigError("--jobs must be >= 1", source="--jobs")
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except OSError as exc:
            print(f"config error: {args.config}: {exc.strerror}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            out = args.out or cfg.output
            rows = run(cfg, out=out, jobs=args.jobs)
        except Exception as exc:  # noqa: BLE001 - reported as exit code 2
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(format_summary(rows, cfg.sweep_param))
        print(f"wrote {out}")
        return EXIT_OK

    try:
        for path in emit_plotdata(args.csv, args.metric, args.outdir):
            print(path)
    except PlotDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
