"""Transient algebraic decay on a large periodic box, at two resolutions.

Before the lattice makes itself felt the solution behaves like a whole-space
one: u and w decay algebraically with the w exponent about 1/2 steeper, and
the nonlinear part of the Duhamel splitting shrinks relative to the state.
Results are reported, never asserted.

    python scripts/torus_soft_checks.py --out runs/torus_soft
"""
import argparse
from pathlib import Path

import numpy as np

from micropolar.decay import (fit_power_law, rate_gap, verdict_table, verdicts_to_jsonl,
                              derivative_cascade)
from micropolar.initial import gaussian_bump
from micropolar.integrator import duhamel_residual, run
from micropolar.linear import write_series_csv
from micropolar.params import Params, RunConfig
from micropolar.spectral import Grid


def soft_run(n, args, p):
    grid = Grid(n, args.box)
    z0 = gaussian_bump(grid, amplitude=args.amplitude, width=args.width,
                       w_amplitude=args.amplitude)
    cps = tuple(np.arange(args.t0, args.t_end + 1e-9, args.every))
    cfg = RunConfig(grid_n=n, box_length=args.box, dt=args.dt, t_end=args.t_end,
                    record_every=4, orders=(0, 1), checkpoints=cps)
    res = run(z0, cfg, p)
    if not res.completed:
        raise SystemExit(f"n={n}: {res.status}: {res.reason}")
    return res, grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs=2, default=[48, 96], metavar=("LO", "HI"))
    ap.add_argument("--box", type=float, default=40.0)
    ap.add_argument("--amplitude", type=float, default=0.1)
    ap.add_argument("--width", type=float, default=1.5)
    ap.add_argument("--dt", type=float, default=0.05)
    ap.add_argument("--t-end", type=float, default=20.0)
    ap.add_argument("--t0", type=float, default=2.0)
    ap.add_argument("--every", type=float, default=2.0)
    ap.add_argument("--window", type=float, nargs=2, default=[4.0, 16.0])
    ap.add_argument("--out", default="runs/torus_soft")
    args = ap.parse_args()

    p = Params()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    window = tuple(args.window)
    fits = {}
    for n in args.n:
        res, grid = soft_run(n, args, p)
        write_series_csv(res.series, out / f"series_{n}.csv")
        duh = duhamel_residual(res.checkpoints, args.t0, p, grid)
        write_series_csv(duh, out / f"duhamel_{n}.csv")
        verdicts = [rate_gap(res.series, window, tol=0.2, soft=True)]
        # u is a curl, so its transform vanishes linearly at xi = 0 and |u|_2
        # decays like t^(-5/4) instead of t^(-3/4)
        verdicts += derivative_cascade(res.series, 1.25, p, (0, 1), window, tol=0.15, soft=True)
        (out / f"verdicts_{n}.jsonl").write_text(verdicts_to_jsonl(verdicts))
        print(f"--- n={n}")
        print(verdict_table(verdicts))
        print(f"Duhamel ratio peak t={duh.meta['ratio_peak_t']}, "
              f"decreasing afterwards: {duh.meta['ratio_decreasing']}")
        fits[n] = {c: fit_power_law(res.series, c, window).exponent
                   for c in ("l2_u", "l2_w", "h1_u")}
    lo, hi = args.n
    print("--- resolution change of fitted exponents")
    for c in fits[lo]:
        print(f"{c:6s} n={lo}: {fits[lo][c]:.4f}  n={hi}: {fits[hi][c]:.4f}  "
              f"|diff| {abs(fits[hi][c] - fits[lo][c]):.2e}")


if __name__ == "__main__":
    main()
