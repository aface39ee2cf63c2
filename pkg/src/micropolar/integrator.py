"""Time stepping of the full damped micropolar system.

The linear generator is integrated exactly per mode (:class:`PropagatorCache`)
and the nonlinear terms

    Q(z) = ( -P[(u.grad)u] - eta P[|u|^(beta-1) u],  -(u.grad)w )

are treated explicitly with the second-order exponential Runge-Kutta scheme
of Cox and Matthews (ETD2RK):

    a       = e^{M h} z_n + h phi1(M h) Q(z_n)
    z_{n+1} = a + h phi2(M h) (Q(a) - Q(z_n))

Energy bookkeeping
------------------
Along the exact solution

    d/dt |z|^2 = -2 mu |Du|^2 - 2 gamma |Dw|^2 - 2 kappa |div w|^2
                 - 2 chi |curl u - 2 w|^2 - 2 eta int |u|^(beta+1),

and the same identity holds for the dealiased semi-discrete system, so the
ledger residual measures time-discretisation error only.  Each step's
quadratic integrals are evaluated exactly along the linear flow from ``z_n``
plus a trapezoid correction for the nonlinear departure; linear-only runs
balance to roundoff.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .linear import AuditReport, PropagatorCache
from .params import Params, RunConfig
from .series import NormSeries
from .spectral import Grid, SpectralState, hm_sq_norm, transform_forward, transform_inverse

log = logging.getLogger(__name__)


class BlowUpError(FloatingPointError):
    def __init__(self, time: float, what: str = "non-finite values"):
        super().__init__(f"{what} at t={time:.6g}")
        self.time = time


class CFLError(RuntimeError):
    def __init__(self, time: float, dt: float, suggested: float):
        super().__init__(f"advective CFL violated at t={time:.6g}: dt={dt:.3g}, "
                         f"suggest dt <= {suggested:.3g}")
        self.time = time
        self.suggested = suggested


@dataclass
class NonlinearTerms:
    adv_u: np.ndarray
    adv_w: np.ndarray
    damp: np.ndarray
    lbeta_u: float = 0.0
    max_speed: float = 0.0

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.adv_u + self.damp, self.adv_w])


def _project(v_hat, k, k2safe):
    kdotv = (k[0] * v_hat[0] + k[1] * v_hat[1] + k[2] * v_hat[2]) / k2safe
    return v_hat - k * kdotv


def eval_nonlinear(z: SpectralState, p: Params, grid: Grid, dealias: bool = True,
                   advection: str = "convective") -> NonlinearTerms:
    """Pseudo-spectral nonlinear terms, projected and masked.

    ``advection="skew"`` averages the convective and divergence forms.
    """
    k = np.stack(np.broadcast_arrays(*grid.k))
    k2 = grid.k2.copy()
    k2[0, 0, 0] = 1.0
    mask = grid.mask(dealias)

    u = transform_inverse(z.u_hat, grid)
    w = transform_inverse(z.w_hat, grid)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(w))):
        raise BlowUpError(z.time)

    # gradients: grad_f[j, i] = d_j f_i
    grad_u = transform_inverse(1j * k[:, None] * z.u_hat[None], grid)
    grad_w = transform_inverse(1j * k[:, None] * z.w_hat[None], grid)
    adv_u = np.einsum("jxyz,jixyz->ixyz", u, grad_u)
    adv_w = np.einsum("jxyz,jixyz->ixyz", u, grad_w)
    adv_u_hat = transform_forward(adv_u, grid)
    adv_w_hat = transform_forward(adv_w, grid)
    if advection == "skew":
        uu_hat = transform_forward(u[:, None] * u[None], grid)
        uw_hat = transform_forward(u[:, None] * w[None], grid)
        adv_u_hat = 0.5 * (adv_u_hat + np.einsum("jxyz,jixyz->ixyz", 1j * k, uu_hat))
        adv_w_hat = 0.5 * (adv_w_hat + np.einsum("jxyz,jixyz->ixyz", 1j * k, uw_hat))
    elif advection != "convective":
        raise ValueError(f"unknown advection form {advection!r}")

    speed = np.sqrt(np.sum(u ** 2, axis=0))
    if p.beta == 1:
        damp = u
    else:
        damp = speed ** (p.beta - 1) * u
    lbeta = float(grid.dx ** 3 * np.sum(speed ** (p.beta + 1)))
    damp_hat = transform_forward(damp, grid)
    if not np.all(np.isfinite(damp_hat)) or not np.isfinite(lbeta):
        raise BlowUpError(z.time, "overflow in damping term")

    return NonlinearTerms(
        adv_u=-_project(adv_u_hat, k, k2) * mask,
        adv_w=-adv_w_hat * mask,
        damp=-p.eta * _project(damp_hat, k, k2) * mask,
        lbeta_u=lbeta,
        max_speed=float(speed.max()),
    )


# -- energy forms -----------------------------------------------------------

def _cross_matrix(k: np.ndarray) -> np.ndarray:
    """``[k]_x`` with ``[k]_x v = k x v`` for ``k`` of shape ``(m, 3)``."""
    z = np.zeros(len(k))
    return np.stack([
        np.stack([z, -k[:, 2], k[:, 1]], -1),
        np.stack([k[:, 2], z, -k[:, 0]], -1),
        np.stack([-k[:, 1], k[:, 0], z], -1),
    ], -2)


def energy_forms(kv: np.ndarray, p: Params) -> dict[str, np.ndarray]:
    """Per-mode Hermitian forms ``K`` whose values ``z^H K z`` (times the
    Parseval weight) give the instantaneous dissipation rates."""
    m = len(kv)
    k2 = np.sum(kv ** 2, axis=1)
    eye = np.eye(3)
    diss = np.zeros((m, 6, 6), complex)
    diss[:, :3, :3] = 2 * p.mu * k2[:, None, None] * eye
    diss[:, 3:, 3:] = 2 * p.gamma * k2[:, None, None] * eye
    divw = np.zeros((m, 6, 6), complex)
    divw[:, 3:, 3:] = 2 * p.kappa * kv[:, :, None] * kv[:, None, :]
    B = np.zeros((m, 3, 6), complex)
    B[:, :, :3] = 1j * _cross_matrix(kv)
    B[:, :, 3:] = -2 * eye
    relax = 2 * p.chi * np.swapaxes(B.conj(), -1, -2) @ B
    return {"dissipation": diss, "div_w": divw, "relax": relax}


_SYM_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_SYM_FULL = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])


class ETD2RK:
    """Stepper bound to one grid, parameter set and step size.

    The state is held on the retained modes only (``cache.mask``): the 2/3
    dealiasing set, or all non-Nyquist modes when ``dealias`` is off.
    """

    def __init__(self, grid: Grid, p: Params, dt: float, dealias: bool = True,
                 nonlinear: bool = True, advection: str = "convective", cfl: float = 1.0):
        self.grid, self.params, self.dt = grid, p, dt
        self.dealias, self.nonlinear, self.advection, self.cfl = dealias, nonlinear, advection, cfl
        self.cache = PropagatorCache(grid, p, grid.mask(dealias))
        c = self.cache
        self.E = c.matrix_function("exp", dt)
        self.P1 = c.matrix_function("phi1", dt) * dt
        self.P2 = c.matrix_function("phi2", dt) * dt
        self.kv = c.kv
        k2 = np.sum(self.kv ** 2, axis=1)
        self._k2safe = np.where(k2 > 0, k2, 1.0)
        self.wt = grid.volume * grid.weights[c.mask]
        self.forms = energy_forms(self.kv, p)
        self.wforms = {name: c.integrated_form(name, K, dt) for name, K in self.forms.items()}

    # conversions
    def gather(self, z: SpectralState) -> np.ndarray:
        zm = self.cache.gather(z.stacked())
        return self.project(zm)

    def state(self, zm: np.ndarray, t: float) -> SpectralState:
        return SpectralState.from_stacked(self.cache.scatter(zm), t)

    def project(self, zm: np.ndarray) -> np.ndarray:
        u = zm[:, :3]
        kdotu = np.sum(self.kv * u, axis=1) / self._k2safe
        out = zm.copy()
        out[:, :3] = u - self.kv * kdotu[:, None]
        return out

    # pieces
    def rhs(self, zm: np.ndarray, t: float):
        """``(Q on retained modes, |u|_{beta+1}^{beta+1}, max |u|)``.

        Same result as :func:`eval_nonlinear` followed by a gather, with the
        projection done on retained modes only.
        """
        if not self.nonlinear:
            return np.zeros_like(zm), 0.0, 0.0
        if self.advection != "convective":
            terms = eval_nonlinear(self.state(zm, t), self.params, self.grid, self.dealias,
                                   self.advection)
            return self.cache.gather(terms.stacked()), terms.lbeta_u, terms.max_speed
        phys = transform_inverse(self.cache.scatter(zm), self.grid)
        if not np.all(np.isfinite(phys)):
            raise BlowUpError(t)
        u, w = phys[:3], phys[3:]
        p = self.params
        speed2 = np.sum(u ** 2, axis=0)
        lbeta = float(self.grid.dx ** 3 * np.sum(speed2 ** ((p.beta + 1) / 2)))
        if self.dealias:
            # flux form: with alias-free retained modes and div u = 0 it equals
            # the convective form there, for 6 instead of 24 inverse transforms
            prod = np.empty((18,) + self.grid.shape)
            for n, (i, j) in enumerate(_SYM_PAIRS):
                np.multiply(u[i], u[j], out=prod[n])
            prod[6:15] = (u[:, None] * w[None]).reshape((9,) + self.grid.shape)
            prod[15:] = u if p.beta == 1 else speed2 ** ((p.beta - 1) / 2) * u
            hat = self.cache.gather(transform_forward(prod, self.grid))
            ik = 1j * self.kv
            adv_u = np.einsum("mj,mji->mi", ik, hat[:, _SYM_FULL])
            adv_w = np.einsum("mj,mji->mi", ik, hat[:, 6:15].reshape(-1, 3, 3))
            damp = hat[:, 15:]
        else:
            m = len(zm)
            ik = 1j * self.kv
            modes = np.empty((m, 18), complex)
            modes[:, :9] = (ik[:, :, None] * zm[:, None, :3]).reshape(m, 9)
            modes[:, 9:] = (ik[:, :, None] * zm[:, None, 3:]).reshape(m, 9)
            grads = transform_inverse(self.cache.scatter(modes), self.grid)
            grads = grads.reshape((2, 3, 3) + self.grid.shape)
            adv = np.stack([np.einsum("jxyz,jixyz->ixyz", u, grads[0]),
                            np.einsum("jxyz,jixyz->ixyz", u, grads[1])])
            adv = self.cache.gather(transform_forward(adv.reshape((6,) + self.grid.shape),
                                                      self.grid))
            adv_u, adv_w = adv[:, :3], adv[:, 3:]
            damp = u if p.beta == 1 else speed2 ** ((p.beta - 1) / 2) * u
            damp = self.cache.gather(transform_forward(damp, self.grid))
        Q = np.empty_like(zm)
        Q[:, :3] = -(adv_u + p.eta * damp)
        Q[:, 3:] = -adv_w
        if not (np.all(np.isfinite(Q)) and np.isfinite(lbeta)):
            raise BlowUpError(t, "overflow in nonlinear terms")
        return self.project(Q), lbeta, float(np.sqrt(speed2.max()))

    def form_value(self, K: np.ndarray, zm: np.ndarray) -> float:
        Kz = np.matmul(K, zm[:, :, None])[:, :, 0]
        return float(np.sum(self.wt * np.real(np.sum(zm.conj() * Kz, axis=1))))

    def rates(self, zm: np.ndarray) -> dict[str, float]:
        """Instantaneous values of the forms in :func:`energy_forms`."""
        p = self.params
        k2 = np.sum(self.kv ** 2, axis=1)
        u, w = zm[:, :3], zm[:, 3:]
        uu = np.sum(np.abs(u) ** 2, axis=1)
        ww = np.sum(np.abs(w) ** 2, axis=1)
        kw = np.abs(np.sum(self.kv * w, axis=1)) ** 2
        r = 1j * np.cross(self.kv, u) - 2 * w
        rr = np.sum(np.abs(r) ** 2, axis=1)
        wt = self.wt
        return {
            "dissipation": float(np.sum(wt * 2 * k2 * (p.mu * uu + p.gamma * ww))),
            "div_w": float(np.sum(wt * 2 * p.kappa * kw)),
            "relax": float(np.sum(wt * 2 * p.chi * rr)),
        }

    def sq_norm(self, zm: np.ndarray) -> float:
        return float(np.sum(self.wt * np.sum(np.abs(zm) ** 2, axis=1)))

    def check_cfl(self, max_speed: float, t: float):
        if max_speed > 0 and self.dt * max_speed > self.cfl * self.grid.dx:
            raise CFLError(t, self.dt, self.cfl * self.grid.dx / max_speed)

    def advance(self, zm: np.ndarray, N0: np.ndarray, t: float):
        """One ETD2RK step from ``zm`` with ``N0 = Q(zm)`` precomputed.

        Returns ``(z_next, e^{Mh} zm)``.
        """
        apply = self.cache.apply
        Ez = apply(self.E, zm)
        if not self.nonlinear:
            return Ez, Ez
        a = Ez + apply(self.P1, N0)
        N1, _, _ = self.rhs(a, t + self.dt)
        z1 = a + apply(self.P2, N1 - N0)
        return self.project(z1), Ez

    def step_integrals(self, zm, Ez, z1) -> dict[str, float]:
        """Dissipation integrals over one step, excluding damping."""
        out = {name: self.form_value(W, zm) for name, W in self.wforms.items()}
        if self.nonlinear:
            half = 0.5 * self.dt
            r1, r0 = self.rates(z1), self.rates(Ez)
            for name in out:
                out[name] += half * (r1[name] - r0[name])
        return out


def step(z: SpectralState, dt: float, p: Params, grid: Grid, stepper: ETD2RK | None = None,
         dealias: bool = True, nonlinear: bool = True) -> SpectralState:
    """Advance ``z`` by one ETD2RK step (builds a stepper if none is given)."""
    st = stepper or ETD2RK(grid, p, dt, dealias=dealias, nonlinear=nonlinear)
    zm = st.gather(z)
    N0, _, speed = st.rhs(zm, z.time)
    st.check_cfl(speed, z.time)
    z1, _ = st.advance(zm, N0, z.time)
    return st.state(z1, z.time + st.dt)


# -- runs -------------------------------------------------------------------

@dataclass
class EnergyLedger:
    time: float
    kinetic: float
    dissipation_integral: float
    div_w_integral: float
    damping_integral: float
    relax_integral: float
    initial: float

    @property
    def residual(self) -> float:
        return (self.kinetic + self.dissipation_integral + self.div_w_integral
                + self.damping_integral + self.relax_integral - self.initial)

    @property
    def inequality_residual(self) -> float:
        return self.residual - self.relax_integral


@dataclass
class RunResult:
    series: NormSeries
    ledger: list[EnergyLedger]
    checkpoints: dict[float, SpectralState]
    states: list[SpectralState]
    status: str = "completed"
    reason: str = ""
    grid: Grid | None = None

    @property
    def completed(self) -> bool:
        return self.status == "completed"


def series_columns(orders) -> list[str]:
    cols = ["t", "l2_u", "l2_w"]
    for m in orders:
        cols += [f"h{m}_u", f"h{m}_w"]
    cols += ["lbeta_u", "energy", "dissipation", "div_w", "damping", "relax",
             "energy_residual", "ineq_residual"]
    return cols


def run(z0: SpectralState, cfg: RunConfig, p: Params, keep_states: bool = False,
        stepper: ETD2RK | None = None) -> RunResult:
    """Integrate from ``z0`` to ``cfg.t_end``.

    Records every ``cfg.record_every`` steps (and at the final step); stores
    the states nearest to ``cfg.checkpoints``.  On blow-up or CFL failure the
    partial result is returned with ``status`` set accordingly.
    """
    grid = Grid(cfg.grid_n, cfg.box_length)
    st = stepper or ETD2RK(grid, p, cfg.dt, cfg.dealias, cfg.nonlinear, cfg.advection, cfg.cfl)
    n_steps = cfg.n_steps
    checkpoint_steps = {int(round(t / cfg.dt)): t for t in cfg.checkpoints}
    orders = tuple(cfg.orders)

    zm = st.gather(z0)
    t = z0.time
    e0 = st.sq_norm(zm)
    acc = {"dissipation": 0.0, "div_w": 0.0, "relax": 0.0, "damping": 0.0}
    rows, ledger, states, checkpoints = [], [], [], {}
    status, reason = "completed", ""

    def record(zm, t, lbeta):
        state = st.state(zm, t)
        ent = EnergyLedger(t, st.sq_norm(zm), acc["dissipation"], acc["div_w"],
                           acc["damping"], acc["relax"], e0)
        ledger.append(ent)
        row = [t, np.sqrt(hm_sq_norm(state.u_hat, grid, 0)),
               np.sqrt(hm_sq_norm(state.w_hat, grid, 0))]
        for m in orders:
            row += [np.sqrt(hm_sq_norm(state.u_hat, grid, m)),
                    np.sqrt(hm_sq_norm(state.w_hat, grid, m))]
        if lbeta is None:
            u = transform_inverse(state.u_hat, grid)
            lbeta = float(grid.dx ** 3 * np.sum(np.sum(u ** 2, axis=0) ** ((p.beta + 1) / 2)))
        row += [lbeta, ent.kinetic, ent.dissipation_integral, ent.div_w_integral,
                ent.damping_integral, ent.relax_integral, ent.residual,
                ent.inequality_residual]
        rows.append(row)
        if keep_states:
            states.append(state)

    try:
        N0, lb0, speed = st.rhs(zm, t)
        if not st.nonlinear:
            lb0 = None
        record(zm, t, lb0)
        if 0 in checkpoint_steps:
            checkpoints[checkpoint_steps[0]] = st.state(zm, t)
        for n in range(1, n_steps + 1):
            st.check_cfl(speed, t)
            z1, Ez = st.advance(zm, N0, t)
            for name, val in st.step_integrals(zm, Ez, z1).items():
                acc[name] += val
            t_new = z0.time + n * cfg.dt
            if st.nonlinear:
                N1, lb1, speed = st.rhs(z1, t_new)
                acc["damping"] += cfg.dt * p.eta * (lb0 + lb1)
                N0, lb0 = N1, lb1
            zm, t = z1, t_new
            if n % cfg.record_every == 0 or n == n_steps:
                record(zm, t, lb0 if st.nonlinear else None)
            if n in checkpoint_steps:
                checkpoints[checkpoint_steps[n]] = st.state(zm, t)
    except BlowUpError as exc:
        status, reason = "blow-up", str(exc)
        log.warning("run stopped: %s", exc)
    except CFLError as exc:
        status, reason = "cfl", str(exc)
        log.warning("run stopped: %s", exc)

    series = NormSeries.from_rows(series_columns(orders), rows,
                                  {"dt": repr(cfg.dt), "beta": repr(p.beta)})
    return RunResult(series, ledger, checkpoints, states, status, reason, grid)


# -- audits -----------------------------------------------------------------

def energy_budget(c: float, dt: float, elapsed, e0: float, floor: float = 1e-12):
    """``c dt^2 (t - t0)`` plus a roundoff floor relative to the initial energy."""
    return c * dt ** 2 * np.asarray(elapsed, float) + floor * e0


def energy_audit(series: NormSeries, dt: float, c: float, floor: float = 1e-12) -> AuditReport:
    """Check the energy ledger in ``series`` against the order-2 budget.

    Energy and residuals are recomputed from the norm and integral columns,
    so a tampered file is caught.  Three checks: energy never increases between
    records, ``|residual| <= budget`` and inequality residual ``<= budget``.
    """
    if len(series) < 2:
        raise ValueError("energy audit needs at least two records")
    t = series.t
    energy = series["l2_u"] ** 2 + series["l2_w"] ** 2
    e0 = energy[0]
    integrals = series["dissipation"] + series["div_w"] + series["damping"]
    residual = energy + integrals + series["relax"] - e0
    ineq = energy + integrals - e0
    budget = energy_budget(c, dt, t - t[0], e0, floor)
    problems = []
    increase = np.flatnonzero(np.diff(energy) > floor * e0)
    for i in increase[:5]:
        problems.append(f"energy increased at record {i + 1} (t={t[i + 1]:.6g}): "
                        f"{energy[i]:.12g} -> {energy[i + 1]:.12g}")
    over = np.flatnonzero(np.abs(residual) > budget)
    for i in over[:5]:
        problems.append(f"residual {residual[i]:.3e} exceeds budget {budget[i]:.3e} "
                        f"at record {i} (t={t[i]:.6g})")
    over_ineq = np.flatnonzero(ineq > budget)
    for i in over_ineq[:5]:
        problems.append(f"inequality residual {ineq[i]:.3e} > budget at record {i}")
    passed = not (len(increase) or len(over) or len(over_ineq))
    msg = (f"max |residual| {np.max(np.abs(residual)):.3e}, "
           f"max inequality residual {np.max(ineq):.3e}, c={c:.3g}, dt={dt:.3g}")
    if problems:
        msg += "; " + "; ".join(problems)
    return AuditReport("energy", passed, {
        "residual": residual, "inequality_residual": ineq, "budget": budget,
        "max_abs_residual": float(np.max(np.abs(residual))),
        "increase_records": [int(i) + 1 for i in increase]}, msg)


def budget_constant(series: NormSeries, dt: float, safety: float = 4.0) -> float:
    """``safety * max |residual| / (dt^2 (t - t0))`` over the records of ``series``."""
    r = np.abs(series["energy_residual"])
    el = series.t - series.t[0]
    ok = el > 0
    return safety * float(np.max(r[ok] / (dt ** 2 * el[ok]))) if ok.any() else 0.0


def calibrate_budget(z0: SpectralState, cfg: RunConfig, p: Params, safety: float = 4.0,
                     steps: int | None = None) -> tuple[float, float]:
    """Estimate ``c`` in ``|residual| <= c dt^2 (t-t0)`` from runs at ``dt`` and
    ``dt/2``.  Returns ``(c, observed reduction factor)``.

    ``steps`` (default: the full run) limits the calibration horizon.
    """
    n = cfg.n_steps if steps is None else steps
    t_end = n * cfg.dt
    worst = []
    peaks = []
    for dt in (cfg.dt, cfg.dt / 2):
        sub = _replace(cfg, dt=dt, t_end=t_end, record_every=max(1, int(round(cfg.record_every * cfg.dt / dt))),
                       checkpoints=())
        res = run(z0, sub, p)
        worst.append(budget_constant(res.series, dt, safety))
        peaks.append(float(np.max(np.abs(res.series["energy_residual"]))))
    factor = peaks[0] / peaks[1] if peaks[1] > 0 else float("inf")
    return max(worst), factor


def _replace(cfg: RunConfig, **kw) -> RunConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


def self_convergence(z0: SpectralState, cfg: RunConfig, p: Params, dts, ref_factor: int = 64):
    """Errors ``|z_dt(T) - z_ref(T)|_2`` against a ``dt_min/ref_factor``
    reference, and the observed orders between consecutive ``dts``."""
    dts = sorted(dts, reverse=True)
    t_end = cfg.t_end

    def final(dt):
        sub = _replace(cfg, dt=dt, t_end=t_end, record_every=10 ** 9, checkpoints=(t_end,))
        res = run(z0, sub, p)
        if not res.completed:
            raise RuntimeError(res.reason)
        return res.checkpoints[t_end].stacked()

    ref = final(dts[-1] / ref_factor)
    grid = Grid(cfg.grid_n, cfg.box_length)
    errs = [np.sqrt(hm_sq_norm(final(dt) - ref, grid, 0)) for dt in dts]
    orders = [float(np.log(errs[i] / errs[i + 1]) / np.log(dts[i] / dts[i + 1]))
              for i in range(len(dts) - 1)]
    return np.array(errs), orders


def duhamel_residual(states, t0: float, p: Params, grid: Grid,
                     cache: PropagatorCache | None = None) -> NormSeries:
    """``|z(t) - e^{A(t-t0)} z(t0)|_2`` and its ratio to ``|z(t)|_2``.

    ``states`` is a sequence of :class:`SpectralState` (or a mapping of time
    to state) containing one at ``t0``.
    """
    if isinstance(states, dict):
        states = list(states.values())
    states = sorted(states, key=lambda s: s.time)
    base = [s for s in states if abs(s.time - t0) <= 1e-9 * max(1.0, abs(t0))]
    if not base:
        raise KeyError(f"no checkpoint at t0={t0}")
    cache = cache if cache is not None else PropagatorCache(grid, p)
    z0m = cache.gather(base[0].stacked())
    rows = []
    for s in states:
        if s.time < base[0].time:
            continue
        lin = cache.scatter(cache.evolve_modes(z0m, s.time - base[0].time))
        d = s.stacked() - lin
        res = np.sqrt(hm_sq_norm(d, grid, 0))
        nz = np.sqrt(hm_sq_norm(s.stacked(), grid, 0))
        rows.append([s.time, res, nz, res / nz if nz > 0 else 0.0])
    out = NormSeries.from_rows(["t", "residual", "state", "ratio"], rows)
    # the ratio starts at zero, so monotone decay is judged after its peak
    r = out["ratio"]
    tail = r[int(np.argmax(r)):] if len(r) else r
    out.meta["ratio_peak_t"] = repr(float(out.t[int(np.argmax(r))])) if len(r) else "nan"
    out.meta["ratio_decreasing"] = repr(bool(len(tail) > 1 and np.all(np.diff(tail) < 0)))
    return out
