"""Command-line entry points.

Run directory layout written by ``simulate``::

    manifest.txt     config echo, input hashes, version, status (no timestamps)
    timing.txt       wall-clock start/end
    config.ini       resolved configuration, reloaded by ``verify``
    series.csv       norm series (schema in :mod:`micropolar.series`)
    checkpoints/     snapshot files ``t_<time>.snap``
    reports/         verdict tables, JSON lines, gnuplot script

Exit status: 0 on success, 1 on a failed hard verdict, validation failure or
blow-up, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .decay import (FitError, TheoremVerdict, derivative_cascade, difference_series, fit_power_law,
                    hard_failures, rate_gap, stability_difference, verdict_table,
                    verdicts_to_jsonl)
from .initial import make_initial
from .integrator import calibrate_budget, duhamel_residual, energy_audit, run
from .linear import (AccuracyError, ContinuumProfile, continuum_linear_decay, eig_bound_sweep,
                     heat_estimate_audit, sample_wavevectors)
from .params import ConfigError, Params, RunConfig, config_echo, load_config, validate
from .series import NormSeries
from .spectral import Grid, gns_audit, load_state, save_state, transform_inverse

log = logging.getLogger("micropolar")

SUITES = ("energy", "duhamel", "decay", "gns", "heat", "stability")


class UsageError(Exception):
    pass


# -- small helpers ----------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _scalar(raw: str):
    s = raw.strip()
    low = s.lower()
    if low in ("true", "false", "yes", "no", "on", "off"):
        return low in ("true", "yes", "on")
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _section(cp, name: str) -> dict:
    return {k: _scalar(v) for k, v in cp.items(name)} if cp.has_section(name) else {}


def _floats(value, n=None) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        out = (float(value),)
    else:
        out = tuple(float(x) for x in str(value).replace(",", " ").split())
    if n is not None and len(out) != n:
        raise UsageError(f"expected {n} numbers, got {value!r}")
    return out


def _load(path):
    try:
        params, run_cfg, cp = load_config(path)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    return params, run_cfg, cp


def _report_validation(params: Params, run_cfg: RunConfig | None) -> bool:
    rep = validate(params, run_cfg)
    for line in rep.lines():
        print(line, file=sys.stderr)
    return rep.ok


def gnuplot_script(csv_name: str, columns, title: str = "") -> str:
    """A gnuplot script plotting ``columns`` of ``csv_name`` against ``t``
    on log-log axes."""
    lines = ["set datafile separator ','", "set key autotitle columnhead",
             "set logscale xy", "set xlabel 't'", f"set title '{title}'"]
    plots = [f"'{csv_name}' using 't':'{c}' with lines" for c in columns]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def _write_reports(out: Path, stem: str, verdicts) -> None:
    rep = out / "reports"
    rep.mkdir(parents=True, exist_ok=True)
    (rep / f"{stem}.txt").write_text(verdict_table(verdicts) + "\n")
    (rep / f"{stem}.jsonl").write_text(verdicts_to_jsonl(verdicts))


# -- simulate ---------------------------------------------------------------

def _manifest(params, run_cfg, initial, config_sha, status, extra=()) -> str:
    lines = [f"version: {__version__}", f"status: {status}", f"config_sha256: {config_sha}"]
    lines += [f"{k}: {v}" for k, v in extra]
    lines.append("--- config ---")
    lines.append(config_echo(params, run_cfg).rstrip())
    lines.append("[initial]")
    lines += [f"{k} = {v!r}" for k, v in sorted(initial.items())]
    return "\n".join(lines) + "\n"


def _resolved_config(params, run_cfg, initial) -> str:
    text = config_echo(params, run_cfg)
    text = "\n".join(line.replace("'", "") if line.startswith("advection") else line
                     for line in text.splitlines()) + "\n"
    text += "[initial]\n" + "".join(f"{k} = {v}\n" for k, v in sorted(initial.items()))
    return text


def _checkpoint_name(t: float) -> str:
    return f"t_{t:.10g}.snap"


def cmd_simulate(args) -> int:
    config_path = Path(args.config)
    params, run_cfg, cp = _load(config_path)
    if not _report_validation(params, run_cfg):
        print("validation failed; not running", file=sys.stderr)
        return 1
    initial = _section(cp, "initial")
    kind = str(initial.pop("kind", "gaussian"))
    grid = Grid(run_cfg.grid_n, run_cfg.box_length)
    try:
        z0 = make_initial(kind, grid, **initial)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[initial]: {exc}") from exc
    initial["kind"] = kind

    out = Path(args.out) if args.out else Path("runs") / config_path.stem
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    sha = hashlib.sha256(config_path.read_bytes()).hexdigest()
    _atomic_write(out / "manifest.txt", _manifest(params, run_cfg, initial, sha, "running"))
    (out / "config.ini").write_text(_resolved_config(params, run_cfg, initial))
    started = time.time()

    res = run(z0, run_cfg, params)

    res.series.to_csv(out / "series.csv")
    for t, state in sorted(res.checkpoints.items()):
        save_state(out / "checkpoints" / _checkpoint_name(t), state, grid)
    cols = [c for c in res.series.names if c.startswith(("l2_", "h"))]
    (out / "reports" / "plot.gp").write_text(gnuplot_script("../series.csv", cols, "norms"))
    final_t = float(res.series.t[-1]) if len(res.series) else float("nan")
    extra = [("records", len(res.series)), ("final_time", repr(final_t))]
    if res.reason:
        extra.append(("reason", res.reason))
    _atomic_write(out / "manifest.txt",
                  _manifest(params, run_cfg, initial, sha, res.status, extra))
    (out / "timing.txt").write_text(f"start: {started:.3f}\nend: {time.time():.3f}\n"
                                    f"elapsed_s: {time.time() - started:.3f}\n")
    print(f"{res.status}: {len(res.series)} records in {out}")
    if not res.completed:
        print(f"run stopped early: {res.reason}", file=sys.stderr)
        return 1
    return 0


# -- linear-decay -----------------------------------------------------------

def cmd_linear_decay(args) -> int:
    params, _, cp = _load(args.config)
    _report_validation(params, None)
    sec = _section(cp, "linear")
    orders = tuple(int(x) for x in _floats(sec.get("orders", "0 1 2")))
    profile = ContinuumProfile(
        a=_floats(sec.get("a", "1 0 0"), 3), b=_floats(sec.get("b", "0 0 0"), 3),
        width=float(sec.get("width", 1.0)), n_radial=int(sec.get("n_radial", 256)),
        n_theta=int(sec.get("n_theta", 8)), n_phi=int(sec.get("n_phi", 16)))
    times = np.geomspace(float(sec.get("t_min", 1e2)), float(sec.get("t_max", 1e5)),
                         int(sec.get("n_times", 61)))
    try:
        series = continuum_linear_decay(profile, params, orders, times,
                                        str(sec.get("convention", "system")),
                                        rtol=float(sec.get("rtol", 1e-6)))
    except AccuracyError as exc:
        print(f"quadrature not converged: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else Path("runs") / (Path(args.config).stem + "-linear")
    out.mkdir(parents=True, exist_ok=True)
    for m in orders:
        NormSeries({"t": series.t, f"h{m}_u": series[f"h{m}_u"], f"h{m}_w": series[f"h{m}_w"]}
                   ).to_csv(out / f"decay_m{m}.csv")
    alpha = float(sec.get("alpha", 0.75))
    window = (times[0], times[-1])
    verdicts = derivative_cascade(series, alpha, params, orders, window,
                                  tol=float(sec.get("tol", 0.05)))
    if 0 in orders:
        verdicts.append(rate_gap(series, window, tol=float(sec.get("tol", 0.05))))
    _write_reports(out, "linear_decay", verdicts)
    (out / "reports" / "plot.gp").write_text(
        "\n".join(gnuplot_script(f"../decay_m{m}.csv", [f"h{m}_u", f"h{m}_w"], f"m={m}")
                  for m in orders))
    print(verdict_table(verdicts))
    return 1 if hard_failures(verdicts) else 0


# -- eig-sweep --------------------------------------------------------------

def _read_xi(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            rows.append(_floats(s, 3))
        except (UsageError, ValueError) as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from exc
    return np.array(rows, float).reshape(-1, 3)


def cmd_eig_sweep(args) -> int:
    params, _, cp = _load(args.config)
    if not params.spectral_gap_ok:
        print("warning: spectral_gap_ok=false (32 chi (mu+chi+gamma) <= 1); "
              "sweeping anyway", file=sys.stderr)
    sec = _section(cp, "sweep")
    if "xi_file" in sec:
        base = Path(args.config).parent
        xi = _read_xi(base / str(sec["xi_file"]))
    else:
        rng = np.random.default_rng(int(sec.get("seed", 0)))
        xi = sample_wavevectors(int(sec.get("count", 1000)), float(sec.get("k_min", 1e-3)),
                                float(sec.get("k_max", 1e3)), rng)
    if len(xi) == 0:
        raise UsageError("empty wavevector sample")
    try:
        rep = eig_bound_sweep(params, xi, str(sec.get("convention", "system")))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) if args.out else Path("runs") / (Path(args.config).stem + "-eig")
    out.mkdir(parents=True, exist_ok=True)
    rep.to_csv(out / "eig_sweep.csv")
    summary = (f"spectral_gap_ok={str(params.spectral_gap_ok).lower()}\n"
               f"samples={len(xi)}\nC_hat={rep.c_hat!r}\npositive={rep.positive}\n")
    (out / "summary.txt").write_text(summary)
    print(summary, end="")
    return 0 if rep.positive else 1


# -- verify -----------------------------------------------------------------

def _load_run(run_dir: Path):
    if not (run_dir / "series.csv").exists():
        raise UsageError(f"{run_dir} is not a run directory (no series.csv)")
    params, run_cfg, cp = load_config(run_dir / "config.ini", env={})
    series = NormSeries.from_csv(run_dir / "series.csv")
    return params, run_cfg, cp, series


def _load_checkpoints(run_dir: Path):
    states = []
    grid = None
    for f in sorted((run_dir / "checkpoints").glob("*.snap")):
        z, grid = load_state(f)
        states.append(z)
    states.sort(key=lambda s: s.time)
    return states, grid


def _verify_energy(run_dir, params, run_cfg, cp, series, args):
    c = args.budget_c if args.budget_c is not None else run_cfg.budget_c
    if c is None:
        if not run_cfg.nonlinear:
            c = 0.0
        else:
            initial = _section(cp, "initial")
            kind = str(initial.pop("kind", "gaussian"))
            z0 = make_initial(kind, Grid(run_cfg.grid_n, run_cfg.box_length), **initial)
            c, _ = calibrate_budget(z0, run_cfg, params, steps=min(run_cfg.n_steps, 200))
            print(f"calibrated budget constant c={c:.4g}")
    rep = energy_audit(series, run_cfg.dt, c)
    v = rep.values
    ratio = float(np.max(np.abs(v["residual"]) / v["budget"]))
    ineq = float(np.max(v["inequality_residual"] / v["budget"]))
    detail = rep.message if not rep.passed else ""
    return [
        TheoremVerdict("energy monotone", 0.0, float(len(v["increase_records"])), 0.0, "upper",
                       detail=(f"first increase at record {v['increase_records'][0]}"
                               if v["increase_records"] else "")),
        TheoremVerdict("energy residual/budget", 1.0, ratio, 0.0, "upper", detail=detail[:200]),
        TheoremVerdict("inequality residual/budget", 1.0, ineq, 0.0, "upper"),
    ]


def _verify_duhamel(run_dir, params, run_cfg, cp, series, args):
    states, grid = _load_checkpoints(run_dir)
    if len(states) < 3:
        raise UsageError("duhamel suite needs at least three checkpoints")
    d = duhamel_residual(states, states[0].time, params, grid)
    r = d["ratio"]
    tail = r[int(np.argmax(r)):]
    worst = float(np.max(np.diff(tail))) if len(tail) > 1 else float("nan")
    (run_dir / "reports").mkdir(exist_ok=True)
    d.to_csv(run_dir / "reports" / "duhamel.csv")
    return [TheoremVerdict("duhamel ratio decreasing", 0.0, worst, 0.0, "upper", soft=True,
                           detail=f"after peak at t={d.meta['ratio_peak_t']}")]


def _verify_decay(run_dir, params, run_cfg, cp, series, args):
    lo = max(run_cfg.t_star, float(series.t[1]) if len(series) > 1 else 0.0)
    window = (args.t_lo if args.t_lo is not None else lo,
              args.t_hi if args.t_hi is not None else float(series.t[-1]))
    out = derivative_cascade(series, args.alpha, params, window=window, tol=0.15, soft=True)
    out.append(rate_gap(series, window, tol=0.2, soft=True))
    return out


def _band_limit(f_hat, grid):
    ix, iy, iz = grid.index
    keep = (np.abs(ix) <= grid.n // 4) & (np.abs(iy) <= grid.n // 4) & (iz <= grid.n // 4)
    return f_hat * keep


def _verify_gns(run_dir, params, run_cfg, cp, series, args):
    states, grid = _load_checkpoints(run_dir)
    if not states:
        raise UsageError("gns suite needs checkpoints")
    ratios = []
    for z in states:
        for f_hat in (z.u_hat, z.w_hat):
            f = transform_inverse(_band_limit(f_hat, grid), grid)
            if np.any(f):
                ratios.append(gns_audit(f, grid))
    worst = max(ratios) if ratios else float("nan")
    return [TheoremVerdict("gns max ratio", float("inf"), worst, 0.0, "upper",
                           detail=f"{len(ratios)} fields; empirical lower bound on the constant")]


def _verify_heat(run_dir, params, run_cfg, cp, series, args):
    times = np.geomspace(1.0, 1e4, 41)
    out = []
    for r in (1, 2):
        for mi in ((0, 0, 0), (1, 0, 0), (1, 1, 0)):
            rep = heat_estimate_audit(r, mi, params.mu + params.chi, times)
            out.append(TheoremVerdict(rep.name + " ratio slope", 0.0,
                                      rep.values["slope_ratio"], 0.05, "upper",
                                      detail="sharp" if rep.values["sharp"] else ""))
    return out


def _verify_stability(run_dir, params, run_cfg, cp, series, args):
    if args.against is None:
        raise UsageError("stability suite needs --against OTHER_RUN_DIR")
    other = Path(args.against)
    p2, r2, _, _ = _load_run(other)
    if p2 != params or (r2.grid_n, r2.box_length, r2.dt) != (run_cfg.grid_n, run_cfg.box_length,
                                                             run_cfg.dt):
        raise UsageError("runs differ in parameters or discretization")
    sa, ga = _load_checkpoints(run_dir)
    sb, gb = _load_checkpoints(other)
    diff = difference_series(sa, sb, ga, gb, args.m)
    window = (args.t_lo if args.t_lo is not None else max(run_cfg.t_star, diff.t[1]),
              args.t_hi if args.t_hi is not None else diff.t[-1])
    out = stability_difference(diff, None, window, args.alpha, args.m)
    gap = rate_gap(diff, window, tol=0.2, soft=True, m=args.m)
    return out + [gap]


_SUITE_FUNCS = {
    "energy": _verify_energy,
    "duhamel": _verify_duhamel,
    "decay": _verify_decay,
    "cascade": _verify_decay,
    "gns": _verify_gns,
    "heat": _verify_heat,
    "stability": _verify_stability,
}


def cmd_verify(args) -> int:
    if args.suite not in _SUITE_FUNCS:
        raise UsageError(f"unknown suite {args.suite!r}; available: {', '.join(SUITES)}")
    run_dir = Path(args.run_dir)
    params, run_cfg, cp, series = _load_run(run_dir)
    try:
        verdicts = _SUITE_FUNCS[args.suite](run_dir, params, run_cfg, cp, series, args)
    except FitError as exc:
        raise UsageError(f"suite {args.suite}: {exc}") from exc
    _write_reports(run_dir, f"verify_{args.suite}", verdicts)
    print(verdict_table(verdicts))
    return 1 if hard_failures(verdicts) else 0


# -- fit --------------------------------------------------------------------

def cmd_fit(args) -> int:
    try:
        series = NormSeries.from_csv(Path(args.series))
    except (OSError, ValueError) as exc:
        raise UsageError(f"{args.series}: {exc}") from exc
    window = tuple(args.window) if args.window else None
    fits = [fit_power_law(series, c, window, args.t_star) for c in args.columns]
    for f in fits:
        print(f"{f.series_id}: exponent {f.exponent:+.6f} +- {f.stderr:.2g} "
              f"(r2 {f.r2:.6f}, {f.n_points} points, t in [{f.window[0]:.6g}, {f.window[1]:.6g}])")
    return 0


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="micropolar", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="nonlinear periodic run")
    s.add_argument("config")
    s.add_argument("--out", help="run directory (default: runs/<config stem>)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("linear-decay", help="whole-space linear decay by quadrature")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (default: runs/<stem>-linear)")
    s.set_defaults(func=cmd_linear_decay)

    s = sub.add_parser("eig-sweep", help="largest symbol eigenvalue over sampled wavevectors")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (default: runs/<stem>-eig)")
    s.set_defaults(func=cmd_eig_sweep)

    s = sub.add_parser("verify", help=f"audit a run directory; suites: {', '.join(SUITES)}")
    s.add_argument("run_dir")
    s.add_argument("suite")
    s.add_argument("--against", help="second run directory (stability suite)")
    s.add_argument("--alpha", type=float, default=0.75, help="decay exponent of |u| (default 0.75)")
    s.add_argument("--m", type=int, default=0, help="derivative order (stability suite, default 0)")
    s.add_argument("--t-lo", type=float, default=None, help="fit window start")
    s.add_argument("--t-hi", type=float, default=None, help="fit window end")
    s.add_argument("--budget-c", type=float, default=None,
                   help="energy budget constant (default: from config, else calibrated)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("fit", help="power-law fit of series columns")
    s.add_argument("series")
    s.add_argument("columns", nargs="+")
    s.add_argument("--window", type=float, nargs=2, metavar=("T_LO", "T_HI"))
    s.add_argument("--t-star", type=float, default=0.0)
    s.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"micropolar {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"micropolar {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
