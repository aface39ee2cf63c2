"""Temporal convergence of the ETD2RK stepper and of its energy ledger.

Writes ``convergence.csv`` (dt, state error, observed order) and
``energy_residual.csv`` (dt, max |ledger residual|, reduction factor).

    python scripts/convergence_study.py --n 32 --out runs/convergence
"""
import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from micropolar.initial import gaussian_bump
from micropolar.integrator import run, self_convergence
from micropolar.params import Params, RunConfig
from micropolar.spectral import Grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--t-end", type=float, default=0.5)
    ap.add_argument("--dts", type=float, nargs="+", default=[0.04, 0.02, 0.01, 0.005])
    ap.add_argument("--ref-factor", type=int, default=16)
    ap.add_argument("--beta", type=float, default=3.0)
    ap.add_argument("--out", default="runs/convergence")
    args = ap.parse_args()

    p = Params(beta=args.beta)
    grid = Grid(args.n)
    z0 = gaussian_bump(grid, amplitude=1.0, width=0.8, w_amplitude=0.5)
    cfg = RunConfig(grid_n=args.n, t_end=args.t_end, orders=(0,))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dts = sorted(args.dts, reverse=True)
    errs, orders = self_convergence(z0, cfg, p, dts, args.ref_factor)
    with open(out / "convergence.csv", "w") as fh:
        fh.write("dt,error,order\n")
        for i, (dt, e) in enumerate(zip(dts, errs)):
            fh.write(f"{dt!r},{e!r},{orders[i - 1] if i else float('nan')!r}\n")
            print(f"dt={dt:<8g} error={e:.3e}" + (f"  order={orders[i - 1]:.3f}" if i else ""))

    peaks = []
    for dt in dts:
        res = run(z0, replace(cfg, dt=dt, record_every=1), p)
        peaks.append(float(np.max(np.abs(res.series["energy_residual"]))))
    with open(out / "energy_residual.csv", "w") as fh:
        fh.write("dt,max_abs_residual,factor\n")
        for i, (dt, r) in enumerate(zip(dts, peaks)):
            f = peaks[i - 1] / r if i else float("nan")
            fh.write(f"{dt!r},{r!r},{f!r}\n")
            print(f"dt={dt:<8g} max|residual|={r:.3e}" + (f"  factor={f:.2f}" if i else ""))


if __name__ == "__main__":
    main()
