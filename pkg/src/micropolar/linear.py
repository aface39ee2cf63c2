"""The linear part of the system: symbol matrix, its spectrum, the exact
semigroup on the torus and whole-space (continuum) norm evaluation.

Symbol convention
-----------------
``assemble_symbol`` builds the 6x6 matrix with off-diagonal blocks
``i c_curl R3(xi)`` where ``R3(xi) = -[xi]_x`` (``[xi]_x v = xi x v``).  That
makes ``i R3(xi)`` the curl symbol under ``d/dx_j <-> -i xi_j``.  Grid
coefficients use ``d/dx_j <-> +i k_j`` (see :mod:`micropolar.spectral`), so
the torus generator at wavevector ``k`` is ``M(-k) = conj(M(k))``.  The Lame
block ``-kappa xi xi^T`` is the same under either sign.

Two coefficient conventions are available:

``"system"`` (default)
    curl coupling ``2 chi`` and relaxation ``4 chi``, the coefficients of the
    evolution equations; shared with the nonlinear integrator.
``"paper-symbol"``
    curl coupling ``chi`` and relaxation ``2 chi`` as in the printed symbol.

Both give Hermitian matrices for real coefficients.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.special

from .params import Params
from .quadrature import ball_rule
from .series import NormSeries
from .spectral import Grid, ShapeError, SpectralState, hm_sq_norm

CONVENTIONS = {"system": (2.0, 4.0), "paper-symbol": (1.0, 2.0)}


class AccuracyError(RuntimeError):
    pass


def rotation_block(xi: np.ndarray) -> np.ndarray:
    """``R3(xi)`` for wavevectors of shape ``(..., 3)``."""
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    z = np.zeros_like(x1)
    return np.stack([
        np.stack([z, x3, -x2], -1),
        np.stack([-x3, z, x1], -1),
        np.stack([x2, -x1, z], -1),
    ], -2)


def symbol_matrix(xi, p: Params, convention: str = "system") -> np.ndarray:
    """Vectorised symbol: ``xi`` of shape ``(..., 3)`` -> ``(..., 6, 6)``."""
    try:
        c_curl, c_relax = CONVENTIONS[convention]
    except KeyError:
        raise ValueError(f"unknown convention {convention!r}; use {sorted(CONVENTIONS)}") from None
    xi = np.asarray(xi, dtype=float)
    s = np.sum(xi ** 2, axis=-1)[..., None, None]
    eye = np.eye(3)
    M = np.zeros(xi.shape[:-1] + (6, 6), complex)
    M[..., :3, :3] = -(p.mu + p.chi) * s * eye
    coupling = 1j * c_curl * p.chi * rotation_block(xi)
    M[..., :3, 3:] = coupling
    M[..., 3:, :3] = coupling
    M[..., 3:, 3:] = (-(p.gamma * s + c_relax * p.chi) * eye
                      - p.kappa * xi[..., :, None] * xi[..., None, :])
    return M


@dataclass(frozen=True)
class SymbolMatrix:
    xi: np.ndarray
    entries: np.ndarray

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues and unitary eigenvectors (the matrix is Hermitian)."""
        return np.linalg.eigh(self.entries)

    @property
    def lambda_max(self):
        return self.eig[0][..., -1]

    def expm(self, t: float) -> np.ndarray:
        lam, V = self.eig
        return (V * np.exp(lam * t)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)


def assemble_symbol(xi, p: Params, convention: str = "system") -> SymbolMatrix:
    xi = np.asarray(xi, dtype=float)
    return SymbolMatrix(xi, symbol_matrix(xi, p, convention))


# -- spectral-gap sweep -----------------------------------------------------

def sample_wavevectors(count: int, k_min: float = 1e-3, k_max: float = 1e3,
                       rng=None) -> np.ndarray:
    """Log-spaced magnitudes in ``[k_min, k_max]`` with uniform random directions."""
    rng = np.random.default_rng(rng)
    mags = np.geomspace(k_min, k_max, count)
    dirs = rng.normal(size=(count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return mags[:, None] * dirs


@dataclass
class BoundReport:
    xi: np.ndarray
    lambda_max: np.ndarray
    c_hat: float
    argmin: np.ndarray
    violations: list[int]
    failures: dict[int, str]
    spectral_gap_ok: bool

    @property
    def positive(self) -> bool:
        return self.c_hat > 0

    @property
    def ratio(self) -> np.ndarray:
        return -self.lambda_max / np.sum(self.xi ** 2, axis=-1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["xi1", "xi2", "xi3", "abs_xi", "lambda_max", "ratio", "C_hat"])
            for x, lm, r in zip(self.xi, self.lambda_max, self.ratio):
                wr.writerow([repr(float(v)) for v in
                             (*x, np.linalg.norm(x), lm, r, self.c_hat)])


def eig_bound_sweep(p: Params, xi_samples, convention: str = "system",
                    tol: float = 0.0) -> BoundReport:
    """Measure ``C_hat = min(-lambda_max(xi) / |xi|^2)`` over the samples."""
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    if xi.size == 0:
        raise ValueError("empty wavevector sample")
    if np.any(np.sum(xi ** 2, axis=-1) == 0):
        raise ValueError("the zero wavevector cannot enter the C estimate")
    M = symbol_matrix(xi, p, convention)
    lam_max = np.full(len(xi), np.nan)
    failures: dict[int, str] = {}
    try:
        lam_max[:] = np.linalg.eigvalsh(M)[:, -1]
    except np.linalg.LinAlgError:
        for i, m in enumerate(M):
            try:
                lam_max[i] = np.linalg.eigvalsh(m)[-1]
            except np.linalg.LinAlgError as exc:
                failures[i] = str(exc)
    ratio = -lam_max / np.sum(xi ** 2, axis=-1)
    good = np.isfinite(ratio)
    i_min = int(np.flatnonzero(good)[np.argmin(ratio[good])])
    violations = [int(i) for i in np.flatnonzero(good & (lam_max > tol))]
    return BoundReport(xi, lam_max, float(ratio[i_min]), xi[i_min], violations, failures,
                       p.spectral_gap_ok)


# -- exact propagation on the torus -----------------------------------------

def _phi1(x):
    return scipy.special.exprel(x)


def _phi2(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    out[small] = 0.5 + xs / 6 + xs ** 2 / 24 + xs ** 3 / 120 + xs ** 4 / 720
    xl = x[~small]
    out[~small] = (scipy.special.exprel(xl) - 1.0) / xl
    return out


class PropagatorCache:
    """Per-mode eigendecomposition of the torus generator on the modes selected
    by ``mask`` (default: all non-Nyquist modes).

    Mode-wise matrix functions ``f(M dt)`` are memoised by ``(name, dt)``.
    Coefficients outside the mask are treated as zero.
    """

    def __init__(self, grid: Grid, p: Params, mask=None, convention: str = "system"):
        self.grid = grid
        self.params = p
        self.convention = convention
        self.mask = grid.nyquist_mask if mask is None else np.asarray(mask, bool)
        self.kv = grid.kvec[self.mask]
        self._flat = np.flatnonzero(self.mask.ravel())
        M = symbol_matrix(-self.kv, p, convention)
        herm_err = np.max(np.abs(M - np.swapaxes(M.conj(), -1, -2))) if len(M) else 0.0
        self.hermitian = herm_err <= 1e-12 * max(1.0, float(np.max(np.abs(M))))
        self._M = M
        if self.hermitian:
            self.lam, self.V = np.linalg.eigh(M)
            self.Vh = np.swapaxes(self.V.conj(), -1, -2)
        self._memo: dict = {}

    # gather/scatter between (6, spectral) arrays and (modes, 6) arrays
    def gather(self, z: np.ndarray) -> np.ndarray:
        flat = z.reshape(z.shape[0], -1)
        return np.ascontiguousarray(flat[:, self._flat].T)

    def scatter(self, zm: np.ndarray) -> np.ndarray:
        out = np.zeros((zm.shape[1], int(np.prod(self.grid.spectral_shape))), complex)
        out[:, self._flat] = zm.T
        return out.reshape((zm.shape[1],) + self.grid.spectral_shape)

    def matrix_function(self, name: str, dt: float) -> np.ndarray:
        key = (name, float(dt))
        if key not in self._memo:
            if not self.hermitian:
                if name != "exp":
                    raise NotImplementedError("phi functions need a Hermitian generator")
                self._memo[key] = scipy.linalg.expm(self._M * dt)
            else:
                f = {"exp": np.exp, "phi1": _phi1, "phi2": _phi2}[name]
                vals = f(self.lam * dt)
                self._memo[key] = (self.V * vals[:, None, :]) @ self.Vh
        return self._memo[key]

    def apply(self, mat: np.ndarray, zm: np.ndarray) -> np.ndarray:
        return np.matmul(mat, zm[:, :, None])[:, :, 0]

    def evolve_modes(self, zm: np.ndarray, t: float) -> np.ndarray:
        """``exp(M t) zm`` without forming the matrix (for one-off times)."""
        if not self.hermitian:
            return self.apply(self.matrix_function("exp", t), zm)
        c = self.apply(self.Vh, zm)
        return self.apply(self.V, np.exp(self.lam * t) * c)

    def integrated_form(self, name: str, K: np.ndarray, dt: float) -> np.ndarray:
        """Per-mode matrix ``W`` with ``zm^H W zm = int_0^dt |exp(M s) zm|_K^2 ds``.

        ``name`` labels ``K`` for memoisation.
        """
        key = ("form", name, float(dt))
        if key not in self._memo:
            s = self.lam[:, :, None] + self.lam[:, None, :]
            G = dt * _phi1(s * dt)
            Kv = self.Vh @ K @ self.V
            self._memo[key] = self.V @ (Kv * G) @ self.Vh
        return self._memo[key]

    @cached_property
    def slowest_rate(self) -> float:
        """``min -lambda_max`` over nonzero modes in the mask."""
        nz = np.sum(self.kv ** 2, axis=1) > 0
        return float(-np.max(self.lam[nz, -1]))


def propagate_exact(z: SpectralState, dt: float, p: Params, grid: Grid,
                    cache: PropagatorCache | None = None) -> SpectralState:
    """``exp(A dt) z`` mode by mode."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    cache = cache if cache is not None else PropagatorCache(grid, p)
    zm = cache.gather(z.stacked())
    out = cache.scatter(cache.evolve_modes(zm, dt))
    return SpectralState.from_stacked(out, z.time + dt)


# -- whole-space evaluation -------------------------------------------------

@dataclass(frozen=True)
class ContinuumProfile:
    """Initial data ``z0_hat(xi) = (P(xi) a, b) * exp(-width**2 |xi|**2 / 2)``.

    ``P`` is the Leray projector; ``a``, ``b`` are constant vectors.  The
    transform is bounded and generically nonzero as ``xi -> 0``, the
    low-frequency behaviour of integrable data.
    """

    a: tuple[float, float, float] = (1.0, 0.0, 0.0)
    b: tuple[float, float, float] = (0.0, 0.0, 0.0)
    width: float = 1.0
    n_radial: int = 256
    n_theta: int = 8
    n_phi: int = 16
    r_min: float = 1e-7
    r_max: float | None = None

    @property
    def cutoff(self) -> float:
        return self.r_max if self.r_max is not None else 14.0 / self.width

    def values(self, xi: np.ndarray) -> np.ndarray:
        a = np.asarray(self.a, float)
        b = np.asarray(self.b, float)
        s = np.sum(xi ** 2, axis=-1, keepdims=True)
        pa = a - xi * (xi @ a)[:, None] / np.where(s > 0, s, 1.0)
        g = np.exp(-0.5 * self.width ** 2 * s)
        return np.concatenate([pa * g, np.broadcast_to(b, pa.shape) * g], axis=-1).astype(complex)

    def rule(self, refine: int = 1):
        return ball_rule(self.n_radial * refine, self.n_theta * refine, self.n_phi * refine,
                         self.r_min, self.cutoff)

    def exact_sq_norm(self, m: int = 0) -> tuple[float, float]:
        """Closed-form ``(|D^m u0|^2, |D^m w0|^2)`` (Plancherel, infinite shell)."""
        radial = 4 * np.pi * scipy.special.gamma(m + 1.5) / (2 * self.width ** (2 * m + 3))
        a2 = float(np.dot(self.a, self.a))
        b2 = float(np.dot(self.b, self.b))
        return (2 / 3 * a2 * radial / (2 * np.pi) ** 3, b2 * radial / (2 * np.pi) ** 3)


def _continuum_eval(profile: ContinuumProfile, p: Params, orders, times, convention,
                    refine: int, chunk: int = 1 << 15):
    xi, w = profile.rule(refine)
    w = w / (2 * np.pi) ** 3
    times = np.asarray(times, float)
    out_u = {m: np.zeros(len(times)) for m in orders}
    out_w = {m: np.zeros(len(times)) for m in orders}
    for lo in range(0, len(xi), chunk):
        x = xi[lo:lo + chunk]
        wt = w[lo:lo + chunk]
        lam, V = np.linalg.eigh(symbol_matrix(x, p, convention))
        c = np.einsum("nji,nj->ni", V.conj(), profile.values(x))
        r2 = np.sum(x ** 2, axis=1)
        for it, t in enumerate(times):
            zt = np.einsum("nij,nj->ni", V, np.exp(lam * t) * c)
            eu = np.sum(np.abs(zt[:, :3]) ** 2, axis=1) * wt
            ew = np.sum(np.abs(zt[:, 3:]) ** 2, axis=1) * wt
            for m in orders:
                mult = r2 ** m
                out_u[m][it] += np.dot(eu, mult)
                out_w[m][it] += np.dot(ew, mult)
    return ({m: np.sqrt(v) for m, v in out_u.items()},
            {m: np.sqrt(v) for m, v in out_w.items()})


def continuum_linear_decay(profile: ContinuumProfile, p: Params, orders=(0,), times=None,
                           convention: str = "system", rtol: float = 1e-6,
                           check: bool = True) -> NormSeries:
    """Whole-space ``|D^m exp(A t) z0|_2`` split into u and w parts.

    With ``check`` the evaluation is repeated with every node count doubled
    and :class:`AccuracyError` is raised if any value moves by more than
    ``rtol`` (relative).
    """
    orders = tuple(orders)
    times = np.geomspace(1e2, 1e5, 61) if times is None else np.asarray(times, float)
    u, w = _continuum_eval(profile, p, orders, times, convention, 1)
    if check:
        u2, w2 = _continuum_eval(profile, p, orders, times, convention, 2)
        worst = 0.0
        for m in orders:
            # roundoff floor: an identically zero part must not fail the check
            floor = 1e-9 * max(np.max(u2[m]), np.max(w2[m]), 1e-300)
            for a, b in ((u[m], u2[m]), (w[m], w2[m])):
                worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor))))
        if not worst <= rtol:
            raise AccuracyError(
                f"continuum quadrature not converged: node doubling moved values by "
                f"{worst:.3e} (rtol {rtol:.1e}); n_radial={profile.n_radial}, "
                f"n_theta={profile.n_theta}, n_phi={profile.n_phi}")
    cols = {"t": times}
    for m in orders:
        cols[f"h{m}_u"] = u[m]
        cols[f"h{m}_w"] = w[m]
    if 0 in orders:
        cols["l2_u"] = u[0]
        cols["l2_w"] = w[0]
    return NormSeries(cols, {"source": "continuum", "convention": convention})


# -- heat-semigroup smoothing audit -----------------------------------------

@dataclass
class AuditReport:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    message: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.message}"


def gaussian_lr_norm(r: float, width: float = 1.0) -> float:
    """``|exp(-|x|^2/(2 width^2))|_{L^r(R^3)}``."""
    return float((2 * np.pi * width ** 2 / r) ** 1.5) ** (1.0 / r)


def heat_gaussian_norm_exact(multi_index, nu: float, tau, width: float = 1.0):
    """Closed form of ``|D^alpha exp(nu Delta tau) g|_2`` for the Gaussian ``g``."""
    tau = np.asarray(tau, float)
    s = width ** 2 + 2 * nu * tau
    val = (2 * np.pi * width ** 2) ** 3 / (2 * np.pi) ** 3
    for a in multi_index:
        val = val * scipy.special.gamma(a + 0.5) / s ** (a + 0.5)
    return np.sqrt(val)


def heat_estimate_audit(r: int, multi_index, nu: float, times, width: float = 1.0,
                        n_radial: int = 256, n_theta: int = 12, n_phi: int = 24,
                        slope_tol: float = 0.05) -> AuditReport:
    """Ratio of ``|D^alpha e^{nu Delta tau} g|_2`` to the smoothing bound
    ``(nu tau)^(-(3/2)(1/r-1/2) - |alpha|/2) |g|_{L^r}`` for a Gaussian ``g``.

    Passes when the ratio is finite and its log-slope over the last decade of
    ``times`` is at most ``slope_tol`` (no growth).  ``sharp`` records whether
    the slope is within ``slope_tol`` of zero.
    """
    if r not in (1, 2):
        raise ValueError(f"only r in {{1, 2}} is supported, got {r!r}")
    alpha = tuple(int(a) for a in multi_index)
    order = sum(alpha)
    times = np.asarray(times, float)
    xi, w = ball_rule(n_radial, n_theta, n_phi, 1e-8, 40.0 / width)
    mono = np.prod(xi ** (2 * np.asarray(alpha)), axis=1)
    g0 = (2 * np.pi * width ** 2) ** 3 * np.exp(-width ** 2 * np.sum(xi ** 2, axis=1))
    norms = np.array([
        np.sqrt(np.dot(w * mono * g0, np.exp(-2 * nu * t * np.sum(xi ** 2, axis=1))))
        for t in times]) / (2 * np.pi) ** 1.5
    expo = -1.5 * (1.0 / r - 0.5) - order / 2
    bound = (nu * times) ** expo * gaussian_lr_norm(r, width)
    ratio = norms / bound
    last = times >= times[-1] / 10
    slope_ratio = float(np.polyfit(np.log(times[last]), np.log(ratio[last]), 1)[0])
    slope_norm = float(np.polyfit(np.log(times[last]), np.log(norms[last]), 1)[0])
    finite = bool(np.all(np.isfinite(ratio)))
    passed = finite and slope_ratio <= slope_tol
    sharp = abs(slope_ratio) <= slope_tol
    return AuditReport(
        f"heat r={r} alpha={alpha}", passed,
        {"norms": norms, "ratio": ratio, "max_ratio": float(np.max(ratio)),
         "slope_ratio": slope_ratio, "slope_norm": slope_norm, "sharp": sharp},
        f"max ratio {np.max(ratio):.4g}, ratio slope {slope_ratio:+.4f}, "
        f"norm slope {slope_norm:+.4f}{' (sharp)' if sharp else ''}")


# -- linear flows from nonlinear checkpoints --------------------------------

def fit_exponential_rate(t, y) -> float:
    """Decay rate ``c`` of ``y ~ exp(-c t)`` by least squares on ``log y``."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    good = y > 0
    if good.sum() < 2:
        return float("inf")
    return float(-np.polyfit(t[good], np.log(y[good]), 1)[0])


def linear_difference_audit(za: SpectralState, zb: SpectralState, grid_a: Grid,
                            grid_b: Grid, p: Params, times, m: int = 0,
                            cache: PropagatorCache | None = None) -> NormSeries:
    """``|D^m (exp(A(t-t0)) z(t0) - exp(A(t-t1)) z(t1))|`` for ``t >= t1``.

    ``za`` is the checkpoint at ``t0``, ``zb`` the one at ``t1 >= t0``.  The
    series carries fitted exponential rates in its metadata together with the
    slowest torus rate of the generator.
    """
    if grid_a != grid_b:
        raise ShapeError(f"checkpoint grids differ: {grid_a} vs {grid_b}")
    grid = grid_a
    if zb.time < za.time:
        za, zb = zb, za
    cache = cache if cache is not None else PropagatorCache(grid, p)
    am = cache.gather(za.stacked())
    bm = cache.gather(zb.stacked())
    times = np.asarray([t for t in times if t >= zb.time], float)
    du = np.zeros(len(times))
    dw = np.zeros(len(times))
    for i, t in enumerate(times):
        d = cache.scatter(cache.evolve_modes(am, t - za.time) - cache.evolve_modes(bm, t - zb.time))
        du[i] = np.sqrt(hm_sq_norm(d[:3], grid, m))
        dw[i] = np.sqrt(hm_sq_norm(d[3:], grid, m))
    meta = {
        "rate_u": repr(fit_exponential_rate(times, du)),
        "rate_w": repr(fit_exponential_rate(times, dw)),
        "slowest_rate": repr(cache.slowest_rate),
        "energy_rate_bound": repr(p.lam * (2 * np.pi / grid.L) ** 2),
    }
    return NormSeries({"t": times, f"h{m}_u": du, f"h{m}_w": dw}, meta)


def write_series_csv(series: NormSeries, path) -> None:
    Path(path).write_text(series.to_csv())
