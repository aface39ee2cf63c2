"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 5 and 8 take minutes; run ``pytest -m "not slow"`` to skip them.
Criterion 8 is reported but never fails the suite.
"""
import numpy as np
import pytest

from micropolar.decay import fit_arrays, fit_power_law, rate_gap
from micropolar.initial import gaussian_bump, random_field
from micropolar.integrator import budget_constant, duhamel_residual, energy_audit, run, self_convergence
from micropolar.linear import (ContinuumProfile, PropagatorCache, continuum_linear_decay,
                               eig_bound_sweep, propagate_exact, sample_wavevectors)
from micropolar.params import Params, RunConfig
from micropolar.spectral import (Grid, divergence_defect, hermitian_defect,
                                 hm_sq_norm, leray_project, physical_sq_norm, spectral_sq_norm,
                                 transform_inverse)

from oracles import ode_propagate, random_params


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


# -- 1 ----------------------------------------------------------------------

def test_criterion_1_propagator_matches_ode(criterion):
    rng = np.random.default_rng(11)
    p = random_params(rng)
    grid = Grid(32)
    z = random_field(grid, seed=5, k_peak=3.0)
    exact = propagate_exact(z, 1.0, p, grid)
    ref, nfev = ode_propagate(z, grid, p, 1.0)
    err = _rel(exact.stacked(), ref.stacked())
    ok = err <= 1e-9
    criterion(1, ok, f"rel l2 discrepancy {err:.2e} (tol 1e-9, {nfev} rhs evals, {p})")
    assert ok


# -- 2 and 3 ------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweeps():
    """100 parameter sets meeting the gap condition, drawn log-uniformly so
    that some sit close to its boundary, each swept over 1000 wavevectors."""
    rng = np.random.default_rng(2024)
    out = []
    while len(out) < 100:
        mu, gamma = 10 ** rng.uniform(-2, 1, 2)
        chi = 10 ** rng.uniform(-3, 1)
        p = Params(mu=mu, gamma=gamma, chi=chi, kappa=rng.uniform(0, 3))
        if not p.spectral_gap_ok:
            continue
        xi = sample_wavevectors(1000, rng=rng)
        out.append((p, eig_bound_sweep(p, xi)))
    return out


def test_criterion_2_eigenvalue_bound(sweeps, criterion):
    worst_lam = max(float(np.max(r.lambda_max)) for _, r in sweeps)
    c_min = min(r.c_hat for _, r in sweeps)
    bad = [i for i, (_, r) in enumerate(sweeps) if r.violations or not r.c_hat > 0]
    ok = not bad and worst_lam <= 0 and c_min > 0
    criterion(2, ok, f"{len(sweeps)} sets x 1000 xi: max lambda_max {worst_lam:.3e}, "
                     f"min C_hat {c_min:.3e}, failing sets {bad}")
    assert ok


def test_criterion_3_semigroup_contraction(sweeps, criterion):
    rng = np.random.default_rng(33)
    grid = Grid(16)
    worst = -np.inf
    fails = 0
    for i in range(50):
        p, rep = sweeps[i]
        cache = PropagatorCache(grid, p)
        z = random_field(grid, seed=int(rng.integers(1 << 30)), k_peak=rng.uniform(1, 4),
                         w_amplitude=rng.uniform(0, 2))
        for t in (0.1, 1.0, 10.0):
            lhs = np.sqrt(hm_sq_norm(propagate_exact(z, t, p, grid, cache).stacked(), grid, 0))
            heat = z.stacked() * np.exp(-rep.c_hat * grid.k2 * t)
            rhs = np.sqrt(hm_sq_norm(heat, grid, 0))
            excess = lhs / rhs - 1
            worst = max(worst, excess)
            fails += excess > 1e-9
    ok = fails == 0
    criterion(3, ok, f"50 states x 3 times: max |e^(At)z|/|e^(C t Lap)z| - 1 = {worst:.3e} "
                     f"(tol 1e-9), violations {fails}")
    assert ok


# -- 4 ----------------------------------------------------------------------

def test_criterion_4_continuum_rates(criterion):
    times = np.geomspace(1e2, 1e5, 61)
    s = continuum_linear_decay(ContinuumProfile(), Params(), orders=(0, 1, 2), times=times)
    targets = [("h0_u", -0.75, 0.05), ("h0_w", -1.25, 0.05),
               ("h1_u", -1.25, 0.05), ("h2_u", -1.75, 0.07)]
    parts, ok = [], True
    for col, want, tol in targets:
        got = fit_power_law(s, col).exponent
        ok &= abs(got - want) <= tol
        parts.append(f"{col} {got:.4f} ({want}+-{tol})")
    criterion(4, ok, ", ".join(parts))
    assert ok


# -- 5 ----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_energy_inequality(criterion):
    p = Params(beta=3.0)
    grid = Grid(64)
    z0 = gaussian_bump(grid, amplitude=1.0, width=0.6, w_amplitude=0.5)
    dt = 0.005
    fine = run(z0, RunConfig(grid_n=64, dt=dt, t_end=2000 * dt, record_every=10, orders=(0,)), p)
    coarse = run(z0, RunConfig(grid_n=64, dt=2 * dt, t_end=2000 * dt, record_every=5, orders=(0,)), p)
    assert fine.completed and coarse.completed
    # budget calibrated on the coarse run, applied to the production run
    c = budget_constant(coarse.series, 2 * dt)
    audit = energy_audit(fine.series, dt, c)
    energy = fine.series["l2_u"] ** 2 + fine.series["l2_w"] ** 2
    strictly = bool(np.all(np.diff(energy) < 0))
    factor = (np.max(np.abs(coarse.series["energy_residual"]))
              / np.max(np.abs(fine.series["energy_residual"])))
    ok = audit.passed and strictly and factor >= 3.5
    criterion(5, ok, f"{len(energy)} records, energy strictly decreasing: {strictly}; "
                     f"{audit.message}; halving dt reduces max residual by {factor:.2f} (need >= 3.5)")
    assert ok


# -- 6 ----------------------------------------------------------------------

def test_criterion_6_convergence_order(criterion):
    p = Params()
    grid = Grid(32)
    z0 = gaussian_bump(grid, amplitude=1.0, width=0.8, w_amplitude=0.5)
    cfg = RunConfig(grid_n=32, t_end=0.5, orders=(0,))
    errs, orders = self_convergence(z0, cfg, p, [0.02, 0.01, 0.005], ref_factor=16)
    ok = all(abs(o - 2.0) <= 0.1 for o in orders)
    criterion(6, ok, f"errors {', '.join(f'{e:.3e}' for e in errs)}; "
                     f"orders {', '.join(f'{o:.3f}' for o in orders)} (2.0+-0.1)")
    assert ok


# -- 7 ----------------------------------------------------------------------

def test_criterion_7_property_suites(criterion):
    rng = np.random.default_rng(7)
    grid = Grid(32)
    checks = {}

    v = np.fft.rfftn(rng.standard_normal((3, 32, 32, 32)), axes=(1, 2, 3), norm="forward")
    v *= grid.nyquist_mask
    pv = leray_project(v, grid)
    checks["leray idempotent"] = (_rel(leray_project(pv, grid), pv), 1e-12)
    grad = 1j * grid.kvec.transpose(3, 0, 1, 2) * v[0]
    checks["leray annihilates gradients"] = (
        float(np.linalg.norm(leray_project(grad, grid)) / np.linalg.norm(grad)), 1e-12)

    f = v[0]
    phys = physical_sq_norm(transform_inverse(f, grid), grid)
    checks["parseval"] = (abs(phys - spectral_sq_norm(f, grid)) / phys, 1e-10)

    t = np.geomspace(1.0, 1e4, 40)
    planted = max(abs(fit_arrays(t, 3.7 * t ** -a).exponent + a) for a in (0.25, 0.75, 1.25, 2.0))
    checks["fit_power_law planted"] = (planted, 1e-12)

    p = random_params(rng)
    z = random_field(grid, seed=3, k_peak=3.0)
    cache = PropagatorCache(grid, p)
    two = propagate_exact(propagate_exact(z, 0.3, p, grid, cache), 0.7, p, grid, cache)
    one = propagate_exact(z, 1.0, p, grid, cache)
    checks["semigroup"] = (_rel(two.stacked(), one.stacked()), 1e-10)

    herm, div = 0.0, 0.0
    for z0 in (gaussian_bump(grid, 1.0, 0.6, 0.5), random_field(grid, seed=9, k_peak=3.0)):
        cps = tuple(np.round(np.arange(0.05, 1.0001, 0.05), 10))
        res = run(z0, RunConfig(grid_n=32, dt=0.005, t_end=1.0, record_every=20, orders=(0,),
                                checkpoints=cps), Params())
        assert res.completed
        for s in res.checkpoints.values():
            herm = max(herm, hermitian_defect(s.u_hat, grid), hermitian_defect(s.w_hat, grid))
            div = max(div, divergence_defect(s.u_hat, grid))
    checks["hermitian symmetry over runs"] = (herm, 1e-10)
    checks["divergence-free over runs"] = (div, 1e-10)

    ok = all(val <= tol for val, tol in checks.values())
    criterion(7, ok, "; ".join(f"{k} {val:.1e}<={tol:.0e}" for k, (val, tol) in checks.items()))
    assert ok


# -- 8 ----------------------------------------------------------------------

def _soft_run(n):
    """Small-amplitude bump in a box large enough that the lattice does not
    show before t ~ 20."""
    L, dt = 40.0, 0.05
    p = Params()
    grid = Grid(n, L)
    z0 = gaussian_bump(grid, amplitude=0.1, width=1.5, w_amplitude=0.1)
    cps = tuple(np.arange(2.0, 20.001, 2.0))
    cfg = RunConfig(grid_n=n, box_length=L, dt=dt, t_end=20.0, record_every=4, orders=(0, 1),
                    checkpoints=cps)
    res = run(z0, cfg, p)
    return res, p, grid


@pytest.mark.slow
def test_criterion_8_soft_torus_checks(criterion):
    window = (4.0, 16.0)
    hi, p, grid = _soft_run(96)
    lo, _, _ = _soft_run(48)
    gap = rate_gap(hi.series, window, tol=0.2, soft=True)
    gap_ok = gap.measured <= -0.3
    duh = duhamel_residual(hi.checkpoints, 2.0, p, grid)
    duh_ok = duh.meta["ratio_decreasing"] == "True"
    diffs = {c: abs(fit_power_law(hi.series, c, window).exponent
                    - fit_power_law(lo.series, c, window).exponent)
             for c in ("l2_u", "l2_w", "h1_u")}
    res_ok = max(diffs.values()) < 0.05
    ok = gap_ok and duh_ok and res_ok
    criterion(8, ok, f"rate gap {gap.measured:.3f} (<= -0.3: {gap_ok}); Duhamel ratio peaks at "
                     f"t={float(duh.meta['ratio_peak_t']):.3g} then decreasing: {duh_ok}; "
                     f"96 vs 48 exponent changes "
                     + ", ".join(f"{c} {d:.1e}" for c, d in diffs.items())
                     + f" (< 0.05: {res_ok})", soft=True)
