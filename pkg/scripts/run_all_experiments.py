"""Run every CLI experiment with default settings into one output directory."""

import argparse
import sys

from adjoint_lab.cli import EXPERIMENTS, main


def run_all(out):
    codes = {}
    for exp in EXPERIMENTS:
        codes[exp] = main(["run", exp, "--out", out])
    return codes


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    codes = run_all(ap.parse_args().out)
    for exp, code in codes.items():
        print(f"{exp:28s} exit {code}")
    sys.exit(max(codes.values()))
