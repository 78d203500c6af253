#!/usr/bin/env python3
"""Golden-rule constant across inverse temperatures, each value by two
independent quadratures plus the width-convergence check."""
import sys

from thermion.cli import main

if __name__ == "__main__":
    code = 0
    for beta in (0.5, 1.0, 2.0, 4.0):
        code = max(code, main(["fgr", "--out", f"results/fgr_beta{beta}",
                               f"model.beta={beta}", *sys.argv[1:]]))
    sys.exit(code)
