"""Command line: ``oumaxlab <experiment> --seed S --replicas R --format F --out PATH``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
Set ``OUMAXLAB_WORKERS`` to bound the worker threads and
``OUMAXLAB_DISABLE_NUMBA=1`` to force the numpy backend.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .gauge_tests import GaugeError
from .harness import ALIASES, EXPERIMENTS, FORMATS, ConfigError, ExperimentConfig, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oumaxlab", description="OU extremes and excursion experiments.")
    parser.add_argument("--version", action="version", version=f"oumaxlab {__version__}")
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT", parser_class=_Parser)
    sub.required = True
    names = list(EXPERIMENTS) + list(ALIASES)
    for name in names:
        exp = EXPERIMENTS[ALIASES.get(name, name)]
        p = sub.add_parser(name, help=exp.doc, description=exp.doc)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--replicas", "--omegas", type=int, required=exp.name != "gauge-classify",
                       default=1, help="number of replicas (omega samples for lacunary)")
        p.add_argument("--first-replica", type=int, default=0,
                       help="index of the first replica (for split runs)")
        p.add_argument("--format", choices=FORMATS, default="json")
        p.add_argument("--out", default=None, help="report path (stdout when omitted)")
        for key, prm in exp.params.items():
            flag = "--" + key.replace("_", "-")
            if key == "gauge" and exp.name == "gauge-classify":
                p.add_argument(flag, dest="p_" + key, action="append", default=None, help=prm.help)
            else:
                p.add_argument(flag, dest="p_" + key, default=None, help=f"{prm.help} (default {prm.default})")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    params = {k[2:]: v for k, v in vars(args).items() if k.startswith("p_") and v is not None}
    cfg = ExperimentConfig(args.experiment, args.seed, args.replicas, params, args.out,
                           args.format, args.first_replica)
    try:
        result = run_experiment(cfg)
    except (ConfigError, GaugeError) as exc:
        print(f"oumaxlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"oumaxlab: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.out is None:
        sys.stdout.write(result.text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
