#!/usr/bin/env python3
"""Pendulum-on-cart experiment: train, then certify along a control schedule.

Desk scale by default (reduced epochs and collocation budget); pass
--full-scale for the published budget (100000 L-BFGS epochs, expect hours).
"""

import argparse
import sys

from pinncert.cli import main as cli


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/pendulum")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--full-scale", action="store_true")
    parser.add_argument("--intervals", type=int, default=5,
                        help="how many control intervals to certify")
    args = parser.parse_args()

    common = ["--preset", "pendulum", "--out", args.out]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    if args.full_scale:
        common += ["--full-scale"]

    schedule = f"{args.out}/schedule.csv"
    code = cli(["train"] + common)
    if code != 0:
        return code
    code = cli(["schedule", schedule])
    if code != 0:
        return code
    return cli(["certify", "--schedule", schedule,
                "--intervals", str(args.intervals),
                "--with-reference"] + common)


if __name__ == "__main__":
    sys.exit(main())
