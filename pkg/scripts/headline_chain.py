#!/usr/bin/env python3
"""Headline experiment: the full inequality chain at the acceptance
configuration, with the measured constants and the feasibility diagnosis
printed at the end."""
import sys

from thermion.cli import main

if __name__ == "__main__":
    sys.exit(main(["bound-chain", "--out", "results/chain",
                   "model.n_e=24", "model.n_u=24", "model.n_max=1",
                   *sys.argv[1:]]))
