"""Initial data on the periodic grid.

Every builder returns a :class:`SpectralState` with divergence-free velocity.
Data built from a Gaussian potential centred in the box are odd about the
centre, so both fields have zero mean.
"""
from __future__ import annotations

import numpy as np

from .spectral import Grid, SpectralState, curl, leray_project, transform_forward


def _gaussian(grid: Grid, width: float, center=None) -> np.ndarray:
    c = (grid.L / 2,) * 3 if center is None else center
    x, y, z = grid.x
    r2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
    return np.exp(-r2 / (2 * width ** 2))


def gaussian_bump(grid: Grid, amplitude: float = 1.0, width: float = 0.5,
                  w_amplitude: float = 0.0, center=None) -> SpectralState:
    """``u = amplitude * curl(g (1,1,1)/sqrt 3)``, ``w = w_amplitude * curl(g (1,-1,0)/sqrt 2)``
    with ``g`` a Gaussian of the given width, scaled so that ``amplitude`` is
    roughly the peak speed."""
    g_hat = transform_forward(_gaussian(grid, width, center), grid) * grid.nyquist_mask
    scale = width * np.exp(0.5)
    psi_u = np.stack([g_hat, g_hat, g_hat]) / np.sqrt(3)
    psi_w = np.stack([g_hat, -g_hat, np.zeros_like(g_hat)]) / np.sqrt(2)
    u_hat = amplitude * scale * curl(psi_u, grid)
    w_hat = w_amplitude * scale * curl(psi_w, grid)
    return SpectralState(u_hat, w_hat)


def taylor_green(grid: Grid, amplitude: float = 1.0, w_amplitude: float = 0.0) -> SpectralState:
    s = 2 * np.pi / grid.L
    x, y, z = np.broadcast_arrays(*grid.x)
    u = amplitude * np.stack([
        np.sin(s * x) * np.cos(s * y) * np.cos(s * z),
        -np.cos(s * x) * np.sin(s * y) * np.cos(s * z),
        np.zeros(grid.shape),
    ])
    w = w_amplitude * np.stack([
        np.cos(s * x) * np.sin(s * y) * np.sin(s * z),
        np.sin(s * x) * np.cos(s * y) * np.sin(s * z),
        np.zeros(grid.shape),
    ])
    return SpectralState.from_physical(u, w, grid)


def shear(grid: Grid, amplitude: float = 1.0) -> SpectralState:
    s = 2 * np.pi / grid.L
    _, y, _ = np.broadcast_arrays(*grid.x)
    u = np.stack([amplitude * np.sin(s * y), np.zeros(grid.shape), np.zeros(grid.shape)])
    return SpectralState.from_physical(u, np.zeros_like(u), grid)


def random_field(grid: Grid, seed: int = 0, k_peak: float = 2.0, amplitude: float = 1.0,
                 w_amplitude: float = 1.0, solenoidal: bool = True) -> SpectralState:
    """Band-limited random data: white noise filtered by
    ``|k|^4 exp(-2 (|k|/k_peak)^2)`` (integer wavenumbers), then scaled to the
    requested rms amplitudes."""
    rng = np.random.default_rng(seed)
    kk = np.sqrt(sum(a ** 2 for a in grid.index))
    env = kk ** 2 * np.exp(-(kk / k_peak) ** 2) * grid.nyquist_mask
    fields = []
    for amp in (amplitude, w_amplitude):
        f_hat = transform_forward(rng.standard_normal((3,) + grid.shape), grid) * env
        fields.append((f_hat, amp))
    u_hat, w_hat = (f for f, _ in fields)
    if solenoidal:
        u_hat = leray_project(u_hat, grid)
    out = []
    for f_hat, amp in ((u_hat, amplitude), (w_hat, w_amplitude)):
        rms = np.sqrt(np.sum(grid.weights * np.abs(f_hat) ** 2))
        out.append(f_hat * (amp / rms) if rms > 0 else f_hat)
    return SpectralState(out[0], out[1])


BUILDERS = {
    "gaussian": gaussian_bump,
    "taylor-green": taylor_green,
    "shear": shear,
    "random": random_field,
    "zero": lambda grid, **_: SpectralState.zeros(grid),
}


def make_initial(kind: str, grid: Grid, **kwargs) -> SpectralState:
    try:
        builder = BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown initial data {kind!r}; choose from {sorted(BUILDERS)}") from None
    return builder(grid, **kwargs)
