"""Run every bundled scenario preset and write its artifacts under one directory."""
import argparse
import sys

from bimodal.cli import SCENARIOS, main


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output-dir", default="output")
    parser.add_argument("--jobs", type=int, default=1)
    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    codes = []
    for name in sorted(SCENARIOS):
        codes.append(main(["run", "--scenario", name, "--output-dir", f"{args.output_dir}/{name}"]))
    sys.exit(max(codes))
