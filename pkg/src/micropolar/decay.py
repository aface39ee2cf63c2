"""Decay exponents and verdicts from norm series.

A fit is ordinary least squares of ``log value`` against ``log t`` over a
window of records.  Limsup quantities are approximated by the maximum over the
window, so every verdict carries its window and tolerance.

Verdict JSON-lines schema, one object per line::

    {"theorem_id": str, "predicted": float, "measured": float,
     "tolerance": float, "sided": "two" | "upper", "passed": bool,
     "soft": bool, "window": [t_lo, t_hi] | null,
     "constant_comparison": float | null, "detail": str}

``sided == "two"`` passes when ``|measured - predicted| <= tolerance``;
``sided == "upper"`` passes when ``measured <= predicted + tolerance``.
Non-finite floats are written as ``null``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .params import Params, theorem_constant
from .series import NormSeries
from .spectral import Grid, SpectralState, hm_sq_norm

MIN_POINTS = 10


class FitError(ValueError):
    pass


class DomainError(FitError):
    """A value in the fit window is not positive."""


class InsufficientDataError(FitError):
    """Fewer than :data:`MIN_POINTS` records in the fit window."""


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    window: tuple[float, float]
    stderr: float
    r2: float
    series_id: str
    n_points: int
    prefactor: float

    def predict(self, t):
        return self.prefactor * np.asarray(t, float) ** self.exponent


def _select(t: np.ndarray, window, t_star: float) -> np.ndarray:
    lo, hi = (-np.inf, np.inf) if window is None else window
    return (t >= max(lo, t_star)) & (t <= hi)


def fit_arrays(t, y, window=None, series_id: str = "", t_star: float = 0.0) -> DecayFit:
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    keep = _select(t, window, t_star)
    tt, yy = t[keep], y[keep]
    if len(tt) < MIN_POINTS:
        raise InsufficientDataError(
            f"{series_id or 'series'}: {len(tt)} points in window {window}, need {MIN_POINTS}")
    bad = np.flatnonzero(~(yy > 0) | ~(tt > 0))
    if len(bad):
        i = bad[0]
        raise DomainError(f"{series_id or 'series'}: nonpositive entry at t={tt[i]!r} "
                          f"(value {yy[i]!r}); log-log fit undefined")
    x, v = np.log(tt), np.log(yy)
    xm, vm = x.mean(), v.mean()
    dx, dv = x - xm, v - vm
    sxx = float(dx @ dx)
    if sxx == 0:
        raise InsufficientDataError(f"{series_id or 'series'}: all times equal")
    slope = float(dx @ dv) / sxx
    icpt = vm - slope * xm
    resid = v - (icpt + slope * x)
    ssr = float(resid @ resid)
    sst = float(dv @ dv)
    n = len(tt)
    stderr = math.sqrt(ssr / (n - 2) / sxx) if n > 2 else float("inf")
    # a flat series leaves only rounding in sst; call that a perfect fit
    r2 = 1.0 - ssr / sst if sst > 1e-24 * n * (1.0 + vm * vm) else 1.0
    return DecayFit(slope, (float(tt[0]), float(tt[-1])), stderr, r2, series_id, n,
                    float(np.exp(icpt)))


def fit_power_law(series: NormSeries, column: str, window=None, t_star: float = 0.0) -> DecayFit:
    """Power-law fit of ``series[column]`` over ``window`` (records with
    ``t >= t_star`` only)."""
    return fit_arrays(series.t, series[column], window, column, t_star)


def select_window(t, candidates, t_star: float = 0.0, min_points: int = MIN_POINTS):
    """The latest candidate window holding at least ``min_points`` records.

    Candidates are compared by start time, then end time.
    """
    t = np.asarray(t, float)
    ok = [w for w in candidates if np.count_nonzero(_select(t, w, t_star)) >= min_points]
    if not ok:
        raise InsufficientDataError(f"no candidate window holds {min_points} records")
    return max(ok, key=lambda w: (w[0], w[1]))


def decade_windows(t_lo: float, t_hi: float, per_window: float = 1.0, step: float = 0.5):
    """Log-spaced windows ``[a, a*10**per_window]`` covering ``[t_lo, t_hi]``."""
    out = []
    a = math.log10(t_lo)
    while a + per_window <= math.log10(t_hi) + 1e-12:
        out.append((10 ** a, 10 ** (a + per_window)))
        a += step
    return out


def lambda0_estimate(series: NormSeries, alpha: float, window=None, column: str = "l2_u",
                     t_star: float = 0.0) -> float:
    """``max t^alpha |u(t)|_2`` over the window, a finite-horizon limsup proxy."""
    t = series.t
    y = series[column]
    keep = _select(t, window, t_star)
    if np.count_nonzero(keep) < MIN_POINTS:
        raise InsufficientDataError(f"{np.count_nonzero(keep)} points in window, need {MIN_POINTS}")
    if np.any(~(y[keep] > 0)):
        raise DomainError(f"{column}: nonpositive entry in window")
    return float(np.max(t[keep] ** alpha * y[keep]))


@dataclass
class TheoremVerdict:
    theorem_id: str
    predicted: float
    measured: float
    tolerance: float
    sided: str = "two"
    soft: bool = False
    window: tuple[float, float] | None = None
    constant_comparison: float | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.measured):
            return False
        if self.sided == "upper":
            return self.measured <= self.predicted + self.tolerance
        return abs(self.measured - self.predicted) <= self.tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        d["window"] = list(self.window) if self.window is not None else None
        for k in ("predicted", "measured", "tolerance", "constant_comparison"):
            if d[k] is not None and not np.isfinite(d[k]):
                d[k] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TheoremVerdict":
        d = dict(d)
        d.pop("passed", None)
        if d.get("window") is not None:
            d["window"] = tuple(d["window"])
        for k in ("predicted", "measured", "tolerance"):
            if d[k] is None:
                d[k] = float("nan")
        return cls(**d)


def verdicts_to_jsonl(verdicts) -> str:
    return "".join(json.dumps(v.to_dict(), sort_keys=True) + "\n" for v in verdicts)


def verdicts_from_jsonl(text: str) -> list[TheoremVerdict]:
    return [TheoremVerdict.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def verdict_table(verdicts) -> str:
    head = f"{'verdict':<7} {'check':<28} {'predicted':>10} {'measured':>10} {'tol':>6}  note"
    lines = [head, "-" * len(head)]
    for v in verdicts:
        status = "PASS" if v.passed else ("soft" if v.soft else "FAIL")
        rel = "<=" if v.sided == "upper" else "~"
        note = v.detail
        if v.constant_comparison is not None:
            note = f"ratio {v.constant_comparison:.4g} " + note
        lines.append(f"{status:<7} {v.theorem_id:<28} {rel}{v.predicted:>8.4g} "
                     f"{v.measured:>10.4g} {v.tolerance:>6.3g}  {note}".rstrip())
    return "\n".join(lines)


def hard_failures(verdicts) -> list[TheoremVerdict]:
    return [v for v in verdicts if not v.soft and not v.passed]


def _norm_column(series: NormSeries, m: int, field: str) -> str:
    name = f"h{m}_{field}"
    if name in series:
        return name
    if m == 0 and f"l2_{field}" in series:
        return f"l2_{field}"
    return name


def rate_gap(series: NormSeries, window=None, tol: float = 0.05, soft: bool = False,
             t_star: float = 0.0, m: int = 0) -> TheoremVerdict:
    """Exponent of ``|D^m w| / |D^m u|``; passes when at most ``-1/2 + tol``."""
    cu, cw = _norm_column(series, m, "u"), _norm_column(series, m, "w")
    missing = [c for c in (cu, cw) if c not in series]
    if missing:
        raise ValueError(f"series is missing columns {missing}")
    fu = fit_arrays(series.t, series[cu], window, cu, t_star)
    fw = fit_arrays(series.t, series[cw], window, cw, t_star)
    ratio = np.asarray(series[cw], float) / np.asarray(series[cu], float)
    fit = fit_arrays(series.t, ratio, window, f"{cw}/{cu}", t_star)
    return TheoremVerdict(f"rate-gap m={m}", -0.5, fit.exponent, tol, "upper", soft, fit.window,
                          detail=f"u {fu.exponent:+.4f}, w {fw.exponent:+.4f}")


def derivative_cascade(series: NormSeries, alpha: float, p: Params, orders=None,
                       window=None, tol: float = 0.05, tol_const: float = 0.1,
                       soft: bool = False, t_star: float = 0.0) -> list[TheoremVerdict]:
    """Exponent verdicts ``-(alpha+m/2)`` for ``D^m u`` and ``-(alpha+(m+1)/2)``
    for ``D^m w``, plus, for ``m >= 1``, the ratio of
    ``max t^(alpha+m/2) |D^m u|`` to ``C_{alpha,m} lambda0(alpha)``."""
    if orders is None:
        orders = sorted(int(c[1:-2]) for c in series.names
                        if c.startswith("h") and c.endswith("_u") and c[1:-2].isdigit())
    orders = list(orders)
    need = [c for m in orders for c in (_norm_column(series, m, "u"), _norm_column(series, m, "w"))]
    if 0 not in orders and any(m > 0 for m in orders):
        need.append(_norm_column(series, 0, "u"))
    missing = [c for c in need if c not in series]
    if missing:
        raise ValueError(f"series is missing columns {missing}")
    out = []
    lam0 = None
    for m in orders:
        cu, cw = _norm_column(series, m, "u"), _norm_column(series, m, "w")
        fu = fit_arrays(series.t, series[cu], window, cu, t_star)
        fw = fit_arrays(series.t, series[cw], window, cw, t_star)
        out.append(TheoremVerdict(f"cascade u m={m}", -(alpha + m / 2), fu.exponent, tol,
                                  soft=soft, window=fu.window,
                                  detail=f"stderr {fu.stderr:.2g}"))
        out.append(TheoremVerdict(f"cascade w m={m}", -(alpha + (m + 1) / 2), fw.exponent, tol,
                                  soft=soft, window=fw.window,
                                  detail=f"stderr {fw.stderr:.2g}"))
        if m == 0:
            continue
        if lam0 is None:
            lam0 = lambda0_estimate(series, alpha, window, _norm_column(series, 0, "u"), t_star)
        keep = _select(series.t, window, t_star)
        proxy = float(np.max(series.t[keep] ** (alpha + m / 2) * series[cu][keep]))
        bound = theorem_constant(alpha, m, p).u * lam0
        ratio = proxy / bound
        out.append(TheoremVerdict(f"cascade constant m={m}", 1.0, ratio, tol_const, "upper",
                                  soft, fu.window, ratio,
                                  f"proxy {proxy:.4g} vs C*lambda0 {bound:.4g}"))
    return out


def difference_series(states_a, states_b, grid_a: Grid, grid_b: Grid | None = None,
                      m: int = 0) -> NormSeries:
    """``|D^m (u_a - u_b)|_2`` and ``|D^m (w_a - w_b)|_2`` at matching times."""
    grid_b = grid_a if grid_b is None else grid_b
    if grid_a != grid_b:
        raise ValueError(f"runs use different grids: {grid_a} vs {grid_b}")
    a = sorted(states_a, key=lambda s: s.time)
    b = sorted(states_b, key=lambda s: s.time)
    if len(a) != len(b) or any(abs(x.time - y.time) > 1e-9 * max(1.0, abs(x.time))
                               for x, y in zip(a, b)):
        raise ValueError("runs were recorded at different times")
    rows = []
    for x, y in zip(a, b):
        d = x - y
        rows.append([x.time, np.sqrt(hm_sq_norm(d.u_hat, grid_a, m)),
                     np.sqrt(hm_sq_norm(d.w_hat, grid_a, m))])
    return NormSeries.from_rows(["t", f"h{m}_u", f"h{m}_w"], rows)


def stability_difference(run_a, run_b, window, alpha: float, m: int = 0, tol: float = 0.15,
                         soft: bool = True, t_star: float = 0.0) -> list[TheoremVerdict]:
    """Exponent verdicts for the difference of two runs with perturbed data:
    ``-(alpha+m/2)`` for ``u`` and ``-(alpha+m/2+1/2)`` for ``w``.

    ``run_a`` and ``run_b`` are run results (with ``states`` and ``grid``) or
    :class:`NormSeries` already holding the difference norms.
    """
    if isinstance(run_a, NormSeries):
        diff = run_a
    else:
        diff = difference_series(run_a.states, run_b.states, run_a.grid, run_b.grid, m)
    cu, cw = f"h{m}_u", f"h{m}_w"
    pu, pw = -(alpha + m / 2), -(alpha + m / 2 + 0.5)
    keep = _select(diff.t, window, t_star)
    if np.all(diff[cu][keep] == 0) and np.all(diff[cw][keep] == 0):
        return [TheoremVerdict(f"stability u m={m}", pu, pu, tol, soft=soft, window=window,
                               detail="identical data"),
                TheoremVerdict(f"stability w m={m}", pw, pw, tol, soft=soft, window=window,
                               detail="identical data")]
    fu = fit_power_law(diff, cu, window, t_star)
    fw = fit_power_law(diff, cw, window, t_star)
    return [TheoremVerdict(f"stability u m={m}", pu, fu.exponent, tol, soft=soft, window=fu.window),
            TheoremVerdict(f"stability w m={m}", pw, fw.exponent, tol, soft=soft, window=fw.window)]


def low_frequency_energy(z: SpectralState, grid: Grid, r: float) -> float:
    """Fraction of ``|u|^2 + |w|^2`` carried by wavevectors with ``|k| <= r``."""
    if not r > 0:
        raise ValueError("radius must be positive")
    s = z.stacked()
    dens = grid.weights * np.sum(np.abs(s) ** 2, axis=0)
    total = float(dens.sum())
    if total == 0:
        return 0.0
    return float(dens[np.sqrt(grid.k2) <= r].sum()) / total
