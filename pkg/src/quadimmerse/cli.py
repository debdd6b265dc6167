"""Command line front end.

    quadimmerse immerse  --system S.json    [--out R.json]
    quadimmerse simulate --scenario SC.json [--out T.csv]
    quadimmerse observe  --scenario SC.json [--out T.csv] [--report R.json]
    quadimmerse selftest [--seed N]

Documents that are not found on disk are looked up among the bundled
examples, so ``--system example3.json`` works from any directory.
Exit status: 0 success, 1 invalid input or arguments, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data_path
from .immersion import build_ltv, immerse, immersion_report
from .selftest import run_selftest
from .simkit import load_scenario, run_scenario, trace_to_csv
from .sysmodel import load_system

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numerical failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _resolve(path):
    if os.path.exists(path) or os.path.dirname(path):
        return path
    bundled = data_path(path)
    return bundled if os.path.exists(bundled) else path


def _write(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _cmd_immerse(args):
    plant = load_system(_resolve(args.system))
    imm = immerse(plant)
    report = immersion_report(plant, imm, build_ltv(plant, imm))
    _write(json.dumps(report, indent=2) + "\n", args.out)
    print(f"m={report['m']} dims={tuple(report['dims'])} dim_z={report['dim_z']}", file=sys.stderr)


def _cmd_simulate(args, observe=False):
    sc = load_scenario(_resolve(args.scenario))
    res = run_scenario(sc, observe=observe)
    _write(trace_to_csv(res.trace), args.out)
    if getattr(args, "report", None):
        _write(json.dumps(res.report, indent=2) + "\n", args.report)
    for g, e in res.trace.errors.items():
        print(f"err_{g}: initial {e[0]:.3e} final {e[-1]:.3e}", file=sys.stderr)


def _cmd_selftest(args):
    print(f"seed {args.seed}")
    results = run_selftest(args.seed)
    failed = [r.name for r in results if not r.passed]
    print("all checks passed" if not failed else f"failed: {', '.join(failed)}")
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadimmerse", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("immerse", help="compute the immersion and write a JSON report")
    p.add_argument("--system", required=True, help="system document (JSON)")
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(func=_cmd_immerse)

    p = sub.add_parser("simulate", help="simulate the plant and write a CSV trace")
    p.add_argument("--scenario", required=True, help="scenario document (JSON)")
    p.add_argument("--out", help="trace path (default: stdout)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("observe", help="simulate, run the observer, write a CSV trace")
    p.add_argument("--scenario", required=True, help="scenario document (JSON)")
    p.add_argument("--out", help="trace path (default: stdout)")
    p.add_argument("--report", help="also write the immersion report here")
    p.set_defaults(func=lambda a: _cmd_simulate(a, observe=True))

    p = sub.add_parser("selftest", help="run the seeded invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with np.errstate(over="raise", invalid="raise"):
            code = args.func(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
