from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from micropolar.initial import gaussian_bump, random_field, shear
from micropolar.integrator import (ETD2RK, budget_constant, calibrate_budget, duhamel_residual,
                                   energy_audit, energy_budget, eval_nonlinear, run,
                                   self_convergence, series_columns, step)
from micropolar.linear import propagate_exact
from micropolar.params import Params, RunConfig
from micropolar.spectral import (Grid, SpectralState, divergence_defect, hermitian_defect,
                                 transform_forward)

G = Grid(16)
BUMP = dict(amplitude=1.0, width=0.8, w_amplitude=0.5)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def cfg(**kw):
    base = dict(grid_n=16, dt=0.01, t_end=0.2, record_every=1, orders=(0, 1))
    base.update(kw)
    return RunConfig(**base)


def test_closed_form_nonlinear_terms():
    # u = (sin y, 0, sin x): (u.grad)u = (0, 0, sin y cos x), already solenoidal
    x, y, _ = np.broadcast_arrays(*G.x)
    u = np.stack([np.sin(y), np.zeros(G.shape), np.sin(x)])
    w = np.stack([np.zeros(G.shape), np.cos(x), np.zeros(G.shape)])
    z = SpectralState.from_physical(u, w, G)
    nt = eval_nonlinear(z, Params(eta=0.5), G)
    adv = transform_forward(np.stack([0 * x, 0 * x, np.sin(y) * np.cos(x)]), G)
    assert np.max(np.abs(nt.adv_u + adv)) <= 1e-14
    # (u.grad)w = sin y * d_x w = (0, -sin y sin x, 0)
    advw = transform_forward(np.stack([0 * x, -np.sin(y) * np.sin(x), 0 * x]), G)
    assert np.max(np.abs(nt.adv_w + advw)) <= 1e-14
    speed2 = np.sin(y) ** 2 + np.sin(x) ** 2
    assert nt.lbeta_u == pytest.approx(G.dx ** 3 * np.sum(speed2 ** 2), rel=1e-12)
    assert nt.max_speed == pytest.approx(np.sqrt(2), rel=1e-3)


def test_shear_flow_has_no_advection():
    nt = eval_nonlinear(shear(G), Params(), G)
    assert np.max(np.abs(nt.adv_u)) <= 1e-15 and np.max(np.abs(nt.adv_w)) <= 1e-15


@pytest.mark.parametrize("dealias", [True, False])
def test_fast_rhs_matches_reference(dealias):
    p = Params(kappa=0.3, beta=2.5)
    st_ = ETD2RK(G, p, 0.01, dealias=dealias)
    zm = st_.gather(random_field(G, seed=1))
    Q, lb, speed = st_.rhs(zm, 0.0)
    ref = eval_nonlinear(st_.state(zm, 0.0), p, G, dealias=dealias)
    assert np.max(np.abs(Q - st_.cache.gather(ref.stacked()))) <= 1e-14 * np.abs(Q).max()
    assert lb == pytest.approx(ref.lbeta_u, rel=1e-13)
    assert speed == pytest.approx(ref.max_speed, rel=1e-13)


def test_skew_equals_convective_when_dealiased():
    # holds for states on the retained modes, where products are alias-free
    z = random_field(G, seed=2)
    z = SpectralState(z.u_hat * G.dealias_mask, z.w_hat * G.dealias_mask)
    a = eval_nonlinear(z, Params(), G, advection="convective").stacked()
    b = eval_nonlinear(z, Params(), G, advection="skew").stacked()
    assert rel(b, a) <= 1e-12
    with pytest.raises(ValueError):
        eval_nonlinear(z, Params(), G, advection="upwind")


def test_rates_match_forms():
    p = Params(kappa=0.7, chi=0.4)
    st_ = ETD2RK(G, p, 0.01)
    zm = st_.gather(random_field(G, seed=3))
    r = st_.rates(zm)
    for name, K in st_.forms.items():
        assert r[name] == pytest.approx(st_.form_value(K, zm), rel=1e-12)


def test_linear_only_matches_propagator_and_balances():
    p = Params(kappa=0.5)
    z0 = random_field(G, seed=4)
    res = run(z0, cfg(nonlinear=False, t_end=0.5, checkpoints=(0.5,)), p)
    assert res.completed
    ref = propagate_exact(z0, 0.5, p, G)
    cache_mask = G.dealias_mask
    assert rel(res.checkpoints[0.5].stacked(), ref.stacked() * cache_mask) <= 1e-10
    e0 = res.series["energy"][0]
    assert np.max(np.abs(res.series["energy_residual"])) <= 1e-12 * e0


def test_nonlinear_energy_decreases_and_residual_is_second_order():
    p = Params()
    z0 = gaussian_bump(G, **BUMP)
    peaks = []
    for dt in (0.02, 0.01):
        res = run(z0, cfg(dt=dt, t_end=0.4), p)
        assert res.completed
        assert np.all(np.diff(res.series["energy"]) < 0)
        peaks.append(np.max(np.abs(res.series["energy_residual"])))
    assert peaks[0] / peaks[1] >= 3.5


def test_hermitian_and_divergence_preserved():
    res = run(gaussian_bump(G, **BUMP), cfg(t_end=0.3, checkpoints=(0.1, 0.2, 0.3)),
              Params(kappa=1.0))
    for z in res.checkpoints.values():
        assert hermitian_defect(z.stacked(), G) <= 1e-10
        assert divergence_defect(z.u_hat, G) <= 1e-10


def test_run_records_and_determinism():
    c = cfg(t_end=0.1, record_every=3, checkpoints=(0.0, 0.05))
    a = run(gaussian_bump(G, **BUMP), c, Params(), keep_states=True)
    b = run(gaussian_bump(G, **BUMP), c, Params())
    assert a.series.names == series_columns((0, 1))
    assert list(a.series.t) == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.1])
    assert a.series.to_csv() == b.series.to_csv()
    assert set(a.checkpoints) == {0.0, 0.05} and len(a.states) == len(a.series)


def test_blow_up_and_cfl_are_reported():
    z = gaussian_bump(G, **BUMP)
    z.u_hat[0, 1, 0, 0] = np.nan
    res = run(z, cfg(), Params())
    assert res.status == "blow-up" and not res.completed
    res = run(gaussian_bump(G, amplitude=50.0, width=0.8), cfg(dt=0.05, t_end=1.0), Params())
    assert res.status == "cfl" and "suggest" in res.reason


def test_step_function():
    p = Params()
    z = gaussian_bump(G, **BUMP)
    one = step(z, 0.01, p, G)
    res = run(z, cfg(t_end=0.01, checkpoints=(0.01,)), p)
    assert rel(one.stacked(), res.checkpoints[0.01].stacked()) <= 1e-14
    assert one.time == pytest.approx(0.01)


def test_energy_audit_pass_and_tamper():
    p = Params()
    res = run(gaussian_bump(G, **BUMP), cfg(t_end=0.2), p)
    c = budget_constant(res.series, 0.01)
    rep = energy_audit(res.series, 0.01, c)
    assert rep.passed, rep.message
    bad = res.series
    bad.columns["l2_u"] = bad["l2_u"].copy()
    bad.columns["l2_u"][7] *= 1.5
    rep = energy_audit(bad, 0.01, c)
    assert not rep.passed
    assert 7 in rep.values["increase_records"]
    assert "record 7" in rep.message
    with pytest.raises(ValueError):
        energy_audit(bad.window(0, 0), 0.01, c)


def test_energy_budget_shape():
    b = energy_budget(2.0, 0.1, [0.0, 1.0, 2.0], 10.0, floor=1e-3)
    assert np.allclose(b, [0.01, 0.03, 0.05])


def test_calibrate_budget_reports_second_order():
    c, factor = calibrate_budget(gaussian_bump(G, **BUMP), cfg(dt=0.02, t_end=0.2), Params())
    assert c > 0 and factor >= 3.5


def test_self_convergence_order_two():
    c = cfg(t_end=0.2)
    errs, orders = self_convergence(gaussian_bump(G, **BUMP), c, Params(), [0.02, 0.01, 0.005],
                                    ref_factor=8)
    assert np.all(np.diff(errs) < 0)
    assert all(abs(o - 2.0) <= 0.2 for o in orders)


def test_duhamel_residual():
    p = Params()
    res = run(gaussian_bump(G, **BUMP), cfg(nonlinear=False, t_end=0.2,
                                            checkpoints=(0.0, 0.1, 0.2)), p)
    d = duhamel_residual(res.checkpoints, 0.0, p, G)
    assert np.max(d["residual"]) <= 1e-12 * np.max(d["state"])
    res = run(gaussian_bump(G, **BUMP), cfg(t_end=0.2, checkpoints=(0.0, 0.1, 0.2)), p)
    d = duhamel_residual(res.checkpoints, 0.0, p, G)
    assert d["ratio"][0] <= 1e-14 and np.all(d["ratio"][1:] > 1e-10)
    with pytest.raises(KeyError):
        duhamel_residual(res.checkpoints, 0.05, p, G)


@settings(max_examples=5, deadline=None)
@given(st.floats(1.0, 5.0), st.floats(0.5, 2.0))
def test_energy_never_increases_for_any_damping(beta, eta):
    res = run(gaussian_bump(G, **BUMP), cfg(t_end=0.1), Params(beta=beta, eta=eta))
    assert res.completed and np.all(np.diff(res.series["energy"]) < 0)
