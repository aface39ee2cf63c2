"""Whole-space linear decay: fitted exponents and constant ratios per order.

    python scripts/linear_decay_table.py --orders 0 1 2 3
"""
import argparse

import numpy as np

from micropolar.decay import derivative_cascade, rate_gap, verdict_table
from micropolar.linear import ContinuumProfile, continuum_linear_decay
from micropolar.params import Params


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--orders", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--chi", type=float, default=1.0)
    ap.add_argument("--kappa", type=float, default=0.0)
    ap.add_argument("--t-range", type=float, nargs=2, default=[1e2, 1e5])
    ap.add_argument("--alpha", type=float, default=0.75)
    args = ap.parse_args()

    p = Params(mu=args.mu, gamma=args.gamma, chi=args.chi, kappa=args.kappa)
    times = np.geomspace(*args.t_range, 61)
    s = continuum_linear_decay(ContinuumProfile(), p, tuple(args.orders), times)
    window = tuple(args.t_range)
    verdicts = derivative_cascade(s, args.alpha, p, tuple(args.orders), window)
    verdicts.append(rate_gap(s, window))
    print(verdict_table(verdicts))


if __name__ == "__main__":
    main()
