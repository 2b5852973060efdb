"""Command-line entry point: ``quadhps {solve,converge,verify,bench}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, HpsError, TreeError
from .report import (
    CONVERGENCE_COLUMNS,
    format_convergence_row,
    load_config,
    run_bench,
    run_convergence,
    run_solve,
)
from .verify import run_verify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _domain(text: str):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("domain needs four numbers: x_lo x_hi y_lo y_hi")
    return tuple(vals)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="file of 'key = value' lines; flags override it")
    common.add_argument("--problem", choices=["poisson1", "polar_star", "helmholtz"])
    common.add_argument("--M", type=int, help="cells per side on each leaf (even, >= 4)")
    common.add_argument("--min-level", type=int)
    common.add_argument("--max-level", type=int)
    common.add_argument("--adaptive", action="store_true", default=None, help="refine by |f| > threshold")
    common.add_argument("--multi-rhs", action="store_true", default=None, help="keep X and B for new right-hand sides")
    common.add_argument("--retain-T", action="store_true", default=None, help="keep every node's T")
    common.add_argument("--threshold", type=float, help="refinement threshold on |f|")
    common.add_argument("--epsilon", type=float, help="polar_star interface width")
    common.add_argument("--domain", type=_domain, help="polar_star domain 'x_lo x_hi y_lo y_hi'")
    common.add_argument("--out", help="output directory")
    common.add_argument("--vtk", action="store_true", default=None, help="write a VTK file per solve")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="quadhps", description="Quadtree-adaptive HPS solver for lap(u) + lam u = f.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="one solve; prints a JSON report")
    sub.add_parser("converge", parents=[common], help="levels min..max; writes a convergence CSV")
    sub.add_parser("verify", parents=[common], help="invariant checks")
    sub.add_parser("bench", parents=[common], help="timing and storage per level")
    return parser


_CONFIG_KEYS = (
    "problem", "M", "min_level", "max_level", "adaptive", "multi_rhs", "retain_T",
    "threshold", "epsilon", "domain", "out", "vtk", "seed",
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, **{k: getattr(args, k) for k in _CONFIG_KEYS})
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "solve":
            report, _, _ = run_solve(config)
            print(report.to_json())
        elif args.command == "converge":
            rows = run_convergence(config)
            print(",".join(CONVERGENCE_COLUMNS))
            for row in rows:
                print(",".join(format_convergence_row(row).values()))
        elif args.command == "bench":
            for row in run_bench(config):
                print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
        else:
            results = run_verify(config.seed)
            for r in results:
                print(r.line())
            if not all(r.passed for r in results):
                return EXIT_VERIFY
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HpsError, TreeError, ArithmeticError, MemoryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
