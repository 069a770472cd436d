#!/usr/bin/env python3
"""
G-BSDE Lab
"""

import sys
import argparse

from src.core.config import apply_overrides, load_config, parse_ladder
from src.core.engine import SUBCOMMANDS, TREE_SUBCOMMANDS, GBsdeLabEngine
from src.core.errors import ConfigError, InvalidLadder, UnknownProblem


def build_parser():
    parser = argparse.ArgumentParser(
        description="G-BSDE Lab: approximant construction, adversarial solvers and checks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Closed-form G-expectations of B_T^2 and -B_T^2 on the tree and the lattice
  python3 -m src.main expect

  # Solve a catalog problem and compare the lattice with the scenario tree
  python3 -m src.main solve --problem singular_uv

  # Approximant properties for a ladder of indices
  python3 -m src.main props --problem sqrt_z --n 2,4,8,16

  # Monotone sandwich and convergence of the approximating solutions
  python3 -m src.main sandwich --problem sqrt_z --n 2,4,8,16

  # Gap table against phi(2L/(n-L)) on a finer lattice
  python3 -m src.main gap --problem sqrt_z --n 4,8,16,32 --steps 400 --space 801

  # Comparison on the ordered catalog pair plus 100 random ordered pairs
  python3 -m src.main compare --problem comparison_pair

  # Linear representation, quadratic-variation bound, norms along the ladder
  python3 -m src.main linear-rep
  python3 -m src.main qv-bound --steps 10
  python3 -m src.main norms --problem sqrt_z --n 2,4,8

  # Lattice against the finite-difference PDE solver
  python3 -m src.main cross-check --problem sqrt_z --n 8

  # Everything from a JSON config, results under out/
  python3 -m src.main sandwich --config experiment.json --out out
        """,
    )

    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="Experiment to run")
    parser.add_argument("--config", "-c", help="JSON experiment configuration")
    parser.add_argument("--out", "-o", help="Output directory for report.json and checks.csv")
    parser.add_argument("--seed", type=int, help="Seed for sampled checks and random pairs")
    parser.add_argument("--threads", type=int, help="Worker threads for the lattice")
    parser.add_argument("--problem", "-p", help="Catalog problem name")
    parser.add_argument("--n", help="Comma-separated n-ladder, e.g. 2,4,8,16")
    parser.add_argument(
        "--steps",
        type=int,
        help="Lattice time steps (tree depth for linear-rep, qv-bound and norms)",
    )
    parser.add_argument("--space", type=int, help="Lattice space nodes")
    parser.add_argument("--quiet", "-q", action="store_true", help="Only print the summary line")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args.config)
        config = apply_overrides(
            config,
            problem=args.problem,
            n_ladder=parse_ladder(args.n) if args.n else None,
            seed=args.seed,
            threads=args.threads,
            out=args.out,
            steps=args.steps,
            space=args.space,
            tree_steps=args.subcommand in TREE_SUBCOMMANDS,
        )
        engine = GBsdeLabEngine(config, quiet=args.quiet)
    except (ConfigError, UnknownProblem, InvalidLadder) as e:
        print(f"Configuration error: {e}")
        return 2

    report = engine.run(args.subcommand)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
