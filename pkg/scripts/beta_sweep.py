"""Effect of the damping exponent on energy loss and decay.

For each beta: the theorem threshold regime, the share of the energy removed
by the damping term, and fitted decay exponents of |u|_2 and |w|_2.

    python scripts/beta_sweep.py --betas 2 2.5 3 4 --n 32
"""
import argparse

from micropolar.decay import fit_power_law
from micropolar.initial import gaussian_bump
from micropolar.integrator import run
from micropolar.params import Params, RunConfig, beta_threshold
from micropolar.spectral import Grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", type=float, nargs="+", default=[2.0, 2.5, 3.0, 4.0])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--box", type=float, default=20.0)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--amplitude", type=float, default=2.0)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--t-end", type=float, default=5.0)
    ap.add_argument("--alpha", type=float, default=0.5)
    args = ap.parse_args()

    th = beta_threshold(args.alpha)
    print(f"alpha={args.alpha}: threshold {th.theorem:.4f}, regime bounds {th.regimes}")
    grid = Grid(args.n, args.box)
    z0 = gaussian_bump(grid, amplitude=args.amplitude, width=1.0, w_amplitude=0.5)
    window = (args.t_end / 4, args.t_end)
    print(f"{'beta':>5} {'damping/E0':>11} {'dissip/E0':>10} {'exp u':>8} {'exp w':>8}")
    for beta in args.betas:
        p = Params(eta=args.eta, beta=beta)
        cfg = RunConfig(grid_n=args.n, box_length=args.box, dt=args.dt, t_end=args.t_end,
                        record_every=5, orders=(0,))
        res = run(z0, cfg, p)
        s = res.series
        e0 = s["l2_u"][0] ** 2 + s["l2_w"][0] ** 2
        eu = fit_power_law(s, "l2_u", window).exponent
        ew = fit_power_law(s, "l2_w", window).exponent
        print(f"{beta:5.2f} {s['damping'][-1] / e0:11.4e} {s['dissipation'][-1] / e0:10.4f} "
              f"{eu:8.3f} {ew:8.3f}" + ("" if res.completed else f"  [{res.status}]"))


if __name__ == "__main__":
    main()
