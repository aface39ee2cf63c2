"""Independent reference computations used by the tests.

Nothing here goes through the symbol matrix: the linear right-hand side is
written out operator by operator on the retained modes.
"""
import numpy as np
from scipy.integrate import solve_ivp

from micropolar.spectral import Grid, SpectralState


def linear_rhs_modes(k, p):
    """Right-hand side of the linear system on modes with wavevectors ``k``
    (shape ``(m, 3)``), as a function of the flattened state ``(m, 6)``.

    ``d/dx_j`` acts as multiplication by ``i k_j``.
    """
    k2 = np.sum(k ** 2, axis=1)[:, None]
    k2safe = np.where(k2 > 0, k2, 1.0)

    def f(z):
        u, w = z[:, :3], z[:, 3:]
        curl_w = 1j * np.cross(k, w)
        curl_u = 1j * np.cross(k, u)
        du = -(p.mu + p.chi) * k2 * u + 2 * p.chi * curl_w
        du = du - k * np.sum(k * du, axis=1, keepdims=True) / k2safe  # pressure
        grad_div_w = -k * np.sum(k * w, axis=1, keepdims=True)
        dw = -p.gamma * k2 * w + p.kappa * grad_div_w + 2 * p.chi * curl_u - 4 * p.chi * w
        return np.concatenate([du, dw], axis=1)

    return f


def ode_propagate(z: SpectralState, grid: Grid, p, dt, rtol=1e-12, atol=1e-16):
    """Adaptive Runge-Kutta 4(5) integration of the linear system over ``dt``
    for all non-Nyquist modes at once."""
    mask = grid.nyquist_mask
    k = grid.kvec[mask]
    z0 = z.stacked()[:, mask].T.copy()
    f = linear_rhs_modes(k, p)
    shape = z0.shape

    def rhs(_, y):
        return f(y.reshape(shape)).ravel()

    sol = solve_ivp(rhs, (0.0, dt), z0.ravel(), method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    out = np.zeros((6,) + grid.spectral_shape, complex)
    out[:, mask] = sol.y[:, -1].reshape(shape).T
    return SpectralState.from_stacked(out, z.time + dt), sol.nfev


def random_params(rng, kappa=True):
    from micropolar.params import Params
    return Params(mu=rng.uniform(0.2, 2.0), gamma=rng.uniform(0.2, 2.0),
                  chi=rng.uniform(0.2, 2.0), kappa=rng.uniform(0.0, 1.0) if kappa else 0.0)
