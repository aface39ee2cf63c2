"""Periodic-box spectral substrate.

Conventions
-----------
* Fields live on an ``n**3`` grid with period ``L`` in every direction,
  ``x_j = j * L / n``.
* Coefficients are real-to-complex transforms (``scipy.fft.rfftn`` over the
  last three axes) with ``norm="forward"``:
  ``f_hat[k] = n**-3 * sum_x f(x) exp(-i k.x)``.  A constant field ``c`` has
  ``f_hat[0] = c`` and Parseval reads ``|f|_2**2 = L**3 * sum_k |f_hat[k]|**2``
  over the *full* spectrum, i.e. half-spectrum entries with ``0 < kz < n/2``
  count twice.
* Wavenumbers are ``2*pi/L`` times the integers of ``fftfreq``; the Nyquist
  index ``n/2`` is stored as ``-n/2`` on the two full axes.  Derivatives use
  ``d/dx_j <-> i k_j``, and the Nyquist entry of an odd-order derivative
  along an axis is zeroed.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

TOL_DIV = 1e-12
MAX_ORDER = 4


class ShapeError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError(f"grid size must be even, got {self.n}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def volume(self) -> float:
        return self.L ** 3

    @cached_property
    def index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer wavenumbers, broadcastable to the spectral shape."""
        n = self.n
        full = np.fft.fftfreq(n, 1.0 / n)
        half = np.arange(n // 2 + 1, dtype=float)
        return full[:, None, None], full[None, :, None], half[None, None, :]

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = 2 * np.pi / self.L
        return tuple(s * a for a in self.index)

    @cached_property
    def kvec(self) -> np.ndarray:
        """Wavevectors as an array of shape ``spectral_shape + (3,)``."""
        return np.stack(np.broadcast_arrays(*self.k), axis=-1)

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.k
        return kx ** 2 + ky ** 2 + kz ** 2

    @cached_property
    def weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum entry in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes with no Nyquist component."""
        h = self.n // 2
        ix, iy, iz = self.index
        return (np.abs(ix) < h) & (np.abs(iy) < h) & (iz < h)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keeps ``|k_j| <= (n-1)//3`` on every axis."""
        kmax = (self.n - 1) // 3
        ix, iy, iz = self.index
        return (np.abs(ix) <= kmax) & (np.abs(iy) <= kmax) & (iz <= kmax)

    def mask(self, dealias: bool) -> np.ndarray:
        return self.dealias_mask if dealias else self.nyquist_mask

    @cached_property
    def x(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = np.arange(self.n) * self.dx
        return c[:, None, None], c[None, :, None], c[None, None, :]


@dataclass
class SpectralState:
    """Velocity and micro-rotation coefficients at one instant."""

    u_hat: np.ndarray
    w_hat: np.ndarray
    time: float = 0.0

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> "SpectralState":
        z = np.zeros((3,) + grid.spectral_shape, complex)
        return cls(z, z.copy(), time)

    @classmethod
    def from_stacked(cls, z: np.ndarray, time: float = 0.0) -> "SpectralState":
        return cls(z[:3].copy(), z[3:].copy(), time)

    @classmethod
    def from_physical(cls, u: np.ndarray, w: np.ndarray, grid: Grid,
                      time: float = 0.0) -> "SpectralState":
        return cls(transform_forward(u, grid), transform_forward(w, grid), time)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u_hat, self.w_hat])

    def copy(self) -> "SpectralState":
        return SpectralState(self.u_hat.copy(), self.w_hat.copy(), self.time)

    def __sub__(self, other: "SpectralState") -> "SpectralState":
        return SpectralState(self.u_hat - other.u_hat, self.w_hat - other.w_hat, self.time)

    def with_time(self, t: float) -> "SpectralState":
        return replace(self, time=t)


# -- transforms -------------------------------------------------------------

def _check_physical(f: np.ndarray, grid: Grid):
    if f.shape[-3:] != grid.shape:
        raise ShapeError(f"field shape {f.shape} does not match grid {grid.shape}")


def _check_spectral(f_hat: np.ndarray, grid: Grid):
    if f_hat.shape[-3:] != grid.spectral_shape:
        raise ShapeError(
            f"coefficient shape {f_hat.shape} does not match grid {grid.spectral_shape}")


def transform_forward(f: np.ndarray, grid: Grid) -> np.ndarray:
    _check_physical(f, grid)
    return sfft.rfftn(f, axes=(-3, -2, -1), norm="forward", workers=-1)


def transform_inverse(f_hat: np.ndarray, grid: Grid) -> np.ndarray:
    _check_spectral(f_hat, grid)
    return sfft.irfftn(f_hat, s=grid.shape, axes=(-3, -2, -1), norm="forward", workers=-1)


def hermitian_defect(f_hat: np.ndarray, grid: Grid) -> float:
    """Relative size of the part of ``f_hat`` that no real field produces."""
    back = transform_forward(transform_inverse(f_hat, grid), grid)
    scale = np.linalg.norm(f_hat)
    return float(np.linalg.norm(back - f_hat) / scale) if scale else 0.0


# -- differential operators -------------------------------------------------

def leray_project(v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply ``I - k k^T / |k|^2`` per mode; the zero mode passes unchanged."""
    _check_spectral(v_hat, grid)
    kx, ky, kz = grid.k
    k2 = grid.k2.copy()
    k2[0, 0, 0] = 1.0
    kdotv = (kx * v_hat[0] + ky * v_hat[1] + kz * v_hat[2]) / k2
    return np.stack([v_hat[0] - kx * kdotv, v_hat[1] - ky * kdotv, v_hat[2] - kz * kdotv])


def derivative(f_hat: np.ndarray, multi_index, grid: Grid, max_order: int = MAX_ORDER) -> np.ndarray:
    orders = tuple(int(a) for a in multi_index)
    if len(orders) != 3 or min(orders) < 0:
        raise ValueError(f"multi-index must be three nonnegative ints, got {multi_index!r}")
    if sum(orders) > max_order:
        raise ValueError(f"derivative order {sum(orders)} exceeds maximum {max_order}")
    mult = np.ones(grid.spectral_shape, complex)
    h = grid.n // 2
    for k, idx, a in zip(grid.k, grid.index, orders):
        if a == 0:
            continue
        factor = (1j * k) ** a
        if a % 2:
            factor = np.where(np.abs(idx) == h, 0.0, factor)
        mult = mult * factor
    return f_hat * mult


def gradient(f_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Gradient of a scalar (or of each component, new axis first)."""
    return np.stack([derivative(f_hat, e, grid) for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))])


def divergence(v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    return (derivative(v_hat[0], (1, 0, 0), grid) + derivative(v_hat[1], (0, 1, 0), grid)
            + derivative(v_hat[2], (0, 0, 1), grid))


def curl(v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    d = lambda f, e: derivative(f, e, grid)  # noqa: E731
    ex, ey, ez = (1, 0, 0), (0, 1, 0), (0, 0, 1)
    return np.stack([
        d(v_hat[2], ey) - d(v_hat[1], ez),
        d(v_hat[0], ez) - d(v_hat[2], ex),
        d(v_hat[1], ex) - d(v_hat[0], ey),
    ])


def laplacian(f_hat: np.ndarray, grid: Grid) -> np.ndarray:
    return -grid.k2 * f_hat


def divergence_defect(u_hat: np.ndarray, grid: Grid) -> float:
    """``|k.u|_2 / |(|k| u)|_2``, zero for a constant field."""
    kx, ky, kz = grid.k
    kdotu = kx * u_hat[0] + ky * u_hat[1] + kz * u_hat[2]
    mag = spectral_sq_norm(u_hat, grid, grid.k2)
    return float(np.sqrt(spectral_sq_norm(kdotu, grid) / mag)) if mag > 0 else 0.0


# -- norms ------------------------------------------------------------------

def spectral_sq_norm(f_hat: np.ndarray, grid: Grid, multiplier=None) -> float:
    """``|f|_2**2`` (summed over leading component axes) via Parseval."""
    a = np.abs(f_hat) ** 2
    if multiplier is not None:
        a = a * multiplier
    while a.ndim > 3:
        a = a.sum(axis=0)
    return float(grid.volume * np.sum(grid.weights * a))


def hm_sq_norm(f_hat: np.ndarray, grid: Grid, m: int) -> float:
    """``|D^m f|_2**2`` summed over all component and index tuples, i.e. with
    multiplier ``|k|**(2m)``."""
    return spectral_sq_norm(f_hat, grid, None if m == 0 else grid.k2 ** m)


def physical_sq_norm(f: np.ndarray, grid: Grid) -> float:
    return float(grid.dx ** 3 * np.sum(f ** 2))


def lbeta_power(u: np.ndarray, grid: Grid, beta: float) -> float:
    """``int |u|^(beta+1) dx`` with the Euclidean pointwise magnitude."""
    mag = np.sqrt(np.sum(u ** 2, axis=0))
    return float(grid.dx ** 3 * np.sum(mag ** (beta + 1)))


def lq_norm(f: np.ndarray, grid: Grid, q: float) -> float:
    """Component-wise Lebesgue norm: ``(sum_i int |f_i|^q)^(1/q)``; max for q=inf."""
    if np.isinf(q):
        return float(np.max(np.abs(f)))
    return float((grid.dx ** 3 * np.sum(np.abs(f) ** q)) ** (1.0 / q))


@dataclass(frozen=True)
class NormRecord:
    time: float
    l2_u: float
    l2_w: float
    hm_u: dict
    hm_w: dict
    lbeta_u: float

    @property
    def l2(self) -> float:
        """Combined ``|(u, w)|_2``: squares add."""
        return float(np.hypot(self.l2_u, self.l2_w))

    def hm(self, m: int) -> float:
        return float(np.hypot(self.hm_u[m], self.hm_w[m]))


def norms(z: SpectralState, grid: Grid, orders=(0, 1, 2), beta: float = 3.0) -> NormRecord:
    orders = tuple(orders)
    if any(m < 0 or m > MAX_ORDER for m in orders):
        raise ValueError(f"orders must lie in 0..{MAX_ORDER}")
    hm_u = {m: np.sqrt(hm_sq_norm(z.u_hat, grid, m)) for m in orders}
    hm_w = {m: np.sqrt(hm_sq_norm(z.w_hat, grid, m)) for m in orders}
    u = transform_inverse(z.u_hat, grid)
    return NormRecord(
        time=z.time,
        l2_u=float(np.sqrt(hm_sq_norm(z.u_hat, grid, 0))),
        l2_w=float(np.sqrt(hm_sq_norm(z.w_hat, grid, 0))),
        hm_u=hm_u, hm_w=hm_w,
        lbeta_u=lbeta_power(u, grid, beta),
    )


def gns_audit(f: np.ndarray, grid: Grid, band_tol: float = 1e-24) -> float:
    """``|f|_inf |grad f|_2 / (|f|_2^(1/2) |grad f|_2^(1/2) |grad^2 f|_2)``.

    ``f`` is a scalar field or a stack of components on ``grid``; the sup norm
    is the max over grid samples, which requires ``f`` band-limited below half
    the Nyquist wavenumber.
    """
    _check_physical(f, grid)
    f_hat = transform_forward(f, grid)
    ix, iy, iz = grid.index
    high = (np.abs(ix) > grid.n // 4) | (np.abs(iy) > grid.n // 4) | (iz > grid.n // 4)
    total = spectral_sq_norm(f_hat, grid)
    if total == 0.0:
        raise DegenerateInputError("ratio undefined for the zero field")
    if spectral_sq_norm(f_hat * high, grid) > band_tol * total:
        raise ValueError("field is not band-limited below Nyquist/2")
    sup = float(np.max(np.abs(f)))
    g1 = np.sqrt(hm_sq_norm(f_hat, grid, 1))
    g2 = np.sqrt(hm_sq_norm(f_hat, grid, 2))
    if g1 == 0.0:
        raise DegenerateInputError("ratio undefined for a constant field")
    return float(sup * g1 / (np.sqrt(np.sqrt(total) * g1) * g2))


# -- snapshot files ---------------------------------------------------------
#
# Layout (all little-endian):
#   8s   magic b"MPSNAP01"
#   u32  n
#   f64  L
#   f64  time
#   u32  byte length of the UTF-8 field name, then the name
#   u32  number of components c
#   then c * n * n * (n//2+1) complex128 values, C order over
#   (component, kx index, ky index, kz index), fftfreq ordering on kx, ky.

SNAP_MAGIC = b"MPSNAP01"


def write_snapshot(path, coeffs: np.ndarray, grid: Grid, time: float, name: str) -> None:
    _check_spectral(coeffs, grid)
    coeffs = coeffs.reshape((-1,) + grid.spectral_shape)
    raw = name.encode("utf-8")
    header = SNAP_MAGIC + struct.pack("<IddI", grid.n, grid.L, time, len(raw)) + raw
    header += struct.pack("<I", coeffs.shape[0])
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(coeffs, dtype="<c16").tobytes())
    tmp.replace(path)


def read_snapshot(path):
    """Return ``(coeffs, grid, time, name)``."""
    data = Path(path).read_bytes()
    if data[:8] != SNAP_MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    n, L, time, nlen = struct.unpack_from("<IddI", data, 8)
    off = 8 + struct.calcsize("<IddI")
    name = data[off:off + nlen].decode("utf-8")
    off += nlen
    (c,) = struct.unpack_from("<I", data, off)
    off += 4
    grid = Grid(n, L)
    coeffs = np.frombuffer(data, dtype="<c16", offset=off).reshape((c,) + grid.spectral_shape)
    return coeffs.astype(complex), grid, time, name


def save_state(path, z: SpectralState, grid: Grid) -> None:
    write_snapshot(path, z.stacked(), grid, z.time, "z")


def load_state(path) -> tuple[SpectralState, Grid]:
    coeffs, grid, time, _ = read_snapshot(path)
    if coeffs.shape[0] != 6:
        raise ShapeError(f"{path}: expected 6 components, found {coeffs.shape[0]}")
    return SpectralState.from_stacked(coeffs, time), grid
