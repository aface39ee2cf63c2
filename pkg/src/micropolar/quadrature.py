"""Quadrature rules for whole-space Fourier integrals."""
from __future__ import annotations

import numpy as np

NODES_PER_PANEL = 8


def radial_rule(n_nodes: int, r_min: float, r_max: float):
    """Composite Gauss-Legendre rule in ``log r`` for ``int_{r_min}^{r_max} f(r) dr``.

    Panels are equal in ``log r``, which clusters nodes geometrically towards
    ``r = 0`` where long-time behaviour is decided.  ``n_nodes`` below one
    panel gives a single low-order panel.
    """
    if n_nodes < 1:
        raise ValueError("need at least one radial node")
    per = min(NODES_PER_PANEL, n_nodes)
    panels = max(1, n_nodes // per)
    x, w = np.polynomial.legendre.leggauss(per)
    edges = np.linspace(np.log(r_min), np.log(r_max), panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    r = np.exp(s)
    return r, ws * r


def sphere_rule(n_theta: int, n_phi: int):
    """Product rule on the unit sphere: Gauss-Legendre in ``cos(theta)``,
    trapezoid in ``phi``.  Weights sum to ``4*pi``."""
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    st = np.sqrt(1 - ct ** 2)
    dirs = np.stack([
        (st[:, None] * np.cos(phi)[None, :]).ravel(),
        (st[:, None] * np.sin(phi)[None, :]).ravel(),
        np.repeat(ct, n_phi),
    ], axis=-1)
    weights = np.repeat(wt, n_phi) * (2 * np.pi / n_phi)
    return dirs, weights


def ball_rule(n_radial: int, n_theta: int, n_phi: int, r_min: float, r_max: float):
    """Nodes ``xi`` (shape ``(N, 3)``) and weights for ``int f(xi) d^3 xi``
    over the shell ``r_min <= |xi| <= r_max``."""
    r, wr = radial_rule(n_radial, r_min, r_max)
    dirs, wd = sphere_rule(n_theta, n_phi)
    xi = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    w = ((wr * r ** 2)[:, None] * wd[None, :]).ravel()
    return xi, w
