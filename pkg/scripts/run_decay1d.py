#!/usr/bin/env python3
"""Full 1D decay experiment: train, certify with reference, fit the indicator.

Writes network.json, loss.csv, certificates.csv, errornet.json and the
surrogate comparison into the output directory (default out/decay1d).
"""

import argparse
import sys

from pinncert.cli import main as cli


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/decay1d")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    common = ["--preset", "decay1d", "--out", args.out]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    for step in (["train"], ["certify", "--with-reference"], ["surrogate"]):
        code = cli(step + common)
        if code != 0:
            return code
    return cli(["compare", f"{args.out}/certificates.csv",
                f"{args.out}/surrogate_comparison.csv"])


if __name__ == "__main__":
    sys.exit(main())
