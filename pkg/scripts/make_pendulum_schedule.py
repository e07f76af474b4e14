#!/usr/bin/env python3
"""Write the default stabilizing pendulum control schedule to a CSV file.

50 piecewise-constant control intervals over [0, 4] s, generated by clamped
state feedback from a slightly tilted start; see pinncert.presets.
"""

import argparse
import sys

from pinncert.cli import main as cli


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_file", nargs="?", default="schedule.csv")
    args = parser.parse_args()
    return cli(["schedule", args.out_file])


if __name__ == "__main__":
    sys.exit(main())
