import numpy as np
import pytest
from hypothesis import given, strategies as st

from micropolar.initial import gaussian_bump, make_initial, random_field, shear, taylor_green
from micropolar.spectral import (DegenerateInputError, Grid, ShapeError, SpectralState, curl,
                                 derivative, divergence, divergence_defect, gns_audit, gradient,
                                 hermitian_defect, hm_sq_norm, laplacian, lbeta_power,
                                 leray_project, load_state, lq_norm, norms, physical_sq_norm,
                                 read_snapshot, save_state, spectral_sq_norm, transform_forward,
                                 transform_inverse, write_snapshot)

G = Grid(16)


def real_field(seed, comps=3, grid=G):
    return np.random.default_rng(seed).standard_normal((comps,) + grid.shape)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@given(st.integers(0, 10 ** 6))
def test_round_trip(seed):
    f = real_field(seed)
    assert rel(transform_inverse(transform_forward(f, G), G), f) <= 1e-12


@given(st.integers(0, 10 ** 6), st.floats(0.5, 20))
def test_parseval(seed, L):
    g = Grid(16, L)
    f = real_field(seed, grid=g)
    phys = physical_sq_norm(f, g)
    assert abs(spectral_sq_norm(transform_forward(f, g), g) - phys) <= 1e-10 * phys


def test_shape_errors():
    with pytest.raises(ShapeError):
        transform_forward(np.zeros((3, 8, 8, 8)), G)
    with pytest.raises(ShapeError):
        transform_inverse(np.zeros((3, 16, 16, 16), complex), G)
    with pytest.raises(ValueError):
        Grid(15)


def test_hermitian_defect():
    f_hat = transform_forward(real_field(0), G)
    assert hermitian_defect(f_hat, G) <= 1e-14
    bad = f_hat.copy()
    bad[0, 1, 0, 0] += 1.0  # breaks the conjugate pairing with (-1, 0, 0)
    assert hermitian_defect(bad, G) > 1e-3


@given(st.integers(0, 10 ** 6))
def test_leray_idempotent_and_divergence_free(seed):
    v = transform_forward(real_field(seed), G) * G.nyquist_mask
    p1 = leray_project(v, G)
    assert rel(leray_project(p1, G), p1) <= 1e-12
    assert divergence_defect(p1, G) <= 1e-12


@given(st.integers(0, 10 ** 6))
def test_leray_annihilates_gradients(seed):
    phi = transform_forward(real_field(seed, 1)[0], G) * G.nyquist_mask
    g = gradient(phi, G)
    assert np.linalg.norm(leray_project(g, G)) <= 1e-12 * np.linalg.norm(g)


@given(st.integers(0, 10 ** 6))
def test_leray_self_adjoint(seed):
    a = transform_forward(real_field(seed), G)
    b = transform_forward(real_field(seed + 1), G)
    lhs = np.vdot(leray_project(a, G), b)
    rhs = np.vdot(a, leray_project(b, G))
    assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(a) * np.linalg.norm(b)


@given(st.tuples(*[st.integers(0, 1)] * 3), st.tuples(*[st.integers(0, 1)] * 3))
def test_derivatives_commute(a, b):
    # multipliers commute; the two products differ only by rounding
    f = transform_forward(real_field(3, 1)[0], G)
    ab = derivative(derivative(f, a, G), b, G)
    ba = derivative(derivative(f, b, G), a, G)
    assert np.max(np.abs(ab - ba)) <= 1e-14 * max(np.max(np.abs(ab)), 1.0)


def test_derivative_of_sine():
    g = Grid(16, 4.0)
    x = np.broadcast_to(g.x[0], g.shape)
    s = 2 * np.pi / g.L
    f_hat = transform_forward(np.sin(3 * s * x), g)
    d = transform_inverse(derivative(f_hat, (2, 0, 0), g), g)
    assert np.max(np.abs(d + (3 * s) ** 2 * np.sin(3 * s * x))) <= 1e-10
    with pytest.raises(ValueError):
        derivative(f_hat, (3, 2, 0), g)
    lap = transform_inverse(laplacian(f_hat, g), g)
    assert np.allclose(lap, d)


def test_odd_derivatives_drop_nyquist():
    f_hat = np.zeros(G.spectral_shape, complex)
    f_hat[8, 0, 0] = 1.0
    assert not np.any(derivative(f_hat, (1, 0, 0), G))
    assert np.any(derivative(f_hat, (2, 0, 0), G))


def test_curl_of_gradient_and_div_of_curl_vanish():
    phi = transform_forward(real_field(5, 1)[0], G) * G.nyquist_mask
    assert np.max(np.abs(curl(gradient(phi, G), G))) <= 1e-12
    v = transform_forward(real_field(6), G)
    assert np.max(np.abs(divergence(curl(v, G), G))) <= 1e-12


def test_hm_norms_of_a_mode():
    g = Grid(16, 2 * np.pi)
    x = np.broadcast_to(g.x[0], g.shape)
    f_hat = transform_forward(np.sin(2 * x)[None], g)
    base = g.volume / 2
    for m in range(4):
        assert hm_sq_norm(f_hat, g, m) == pytest.approx(base * 4.0 ** m, rel=1e-12)


def test_lq_and_lbeta():
    g = Grid(16)
    u = np.zeros((3,) + g.shape)
    u[0] = 1.0
    assert lbeta_power(u, g, 3.0) == pytest.approx(g.volume)
    assert lq_norm(u, g, 2) == pytest.approx(np.sqrt(g.volume))
    assert lq_norm(-2 * u, g, np.inf) == 2.0
    # Euclidean magnitude vs component-wise: differ for diagonal fields
    v = np.ones((3,) + g.shape)
    assert lbeta_power(v, g, 1.0) == pytest.approx(3 * g.volume)
    assert lbeta_power(v, g, 3.0) == pytest.approx(9 * g.volume)
    assert lq_norm(v, g, 4) ** 4 == pytest.approx(3 * g.volume)


def test_norm_record():
    z = gaussian_bump(G, width=0.8, w_amplitude=0.5)
    r = norms(z, G, orders=(0, 1))
    assert r.l2_u == pytest.approx(r.hm_u[0])
    assert r.l2 == pytest.approx(np.hypot(r.l2_u, r.l2_w))
    with pytest.raises(ValueError):
        norms(z, G, orders=(5,))


def test_gns_closed_form_for_sine():
    g = Grid(16)
    x = np.broadcast_to(g.x[0], g.shape)
    a = np.sqrt(g.volume / 2)  # |sin x|_2 = |grad|_2 = |grad^2|_2
    assert gns_audit(np.sin(x), g) == pytest.approx(1 / a, rel=1e-12)


def test_gns_errors():
    with pytest.raises(DegenerateInputError):
        gns_audit(np.zeros(G.shape), G)
    with pytest.raises(DegenerateInputError):
        gns_audit(np.ones(G.shape), G)
    x = np.broadcast_to(G.x[0], G.shape)
    with pytest.raises(ValueError):
        gns_audit(np.sin(7 * x), G)


def _band_limited_corpus(count, kmax, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = rng.standard_normal((2 * kmax + 1,) * 3) + 1j * rng.standard_normal((2 * kmax + 1,) * 3)
        out.append(c)
    return out


def _on_grid(coeffs, kmax, grid):
    full = np.zeros(grid.shape, complex)
    idx = np.r_[0:kmax + 1, -kmax:0]
    src = np.r_[kmax:2 * kmax + 1, 0:kmax]
    full[np.ix_(idx, idx, idx)] = coeffs[np.ix_(src, src, src)]
    return np.real(np.fft.ifftn(full, norm="forward"))


def test_gns_corpus_stable_under_refinement():
    corpus = _band_limited_corpus(100, 3, 7)
    maxes = []
    for n in (32, 64):
        g = Grid(n)
        maxes.append(max(gns_audit(_on_grid(c, 3, g), g) for c in corpus))
    assert np.isfinite(maxes).all()
    assert abs(maxes[1] / maxes[0] - 1) <= 0.05


def test_snapshot_round_trip(tmp_path):
    z = random_field(G, seed=2).with_time(1.25)
    save_state(tmp_path / "a.snap", z, G)
    back, g = load_state(tmp_path / "a.snap")
    assert g == G and back.time == 1.25
    assert np.array_equal(back.stacked(), z.stacked())
    write_snapshot(tmp_path / "b.snap", z.u_hat[:2], G, 0.0, "pair")
    coeffs, _, _, name = read_snapshot(tmp_path / "b.snap")
    assert name == "pair" and coeffs.shape[0] == 2
    with pytest.raises(ShapeError):
        load_state(tmp_path / "b.snap")
    (tmp_path / "c.snap").write_bytes(b"garbage")
    with pytest.raises(ValueError):
        read_snapshot(tmp_path / "c.snap")


@pytest.mark.parametrize("kind", ["gaussian", "taylor-green", "shear", "random", "zero"])
def test_initial_data_divergence_free_and_real(kind):
    z = make_initial(kind, G)
    assert divergence_defect(z.u_hat, G) <= 1e-12
    assert hermitian_defect(z.stacked(), G) <= 1e-12
    assert abs(z.u_hat[:, 0, 0, 0]).max() <= 1e-14


def test_initial_data_values():
    z = taylor_green(G, w_amplitude=1.0)
    assert np.sqrt(hm_sq_norm(z.u_hat, G, 0)) == pytest.approx(np.sqrt(G.volume / 4))
    z = shear(G, amplitude=2.0)
    assert np.sqrt(hm_sq_norm(z.u_hat, G, 0)) == pytest.approx(2 * np.sqrt(G.volume / 2))
    assert not np.any(z.w_hat)
    with pytest.raises(ValueError):
        make_initial("vortex", G)
    a, b = random_field(G, seed=4), random_field(G, seed=4)
    assert np.array_equal(a.stacked(), b.stacked())
    assert isinstance(SpectralState.zeros(G), SpectralState)
