"""
Discrete fields on the boundary-layer domain.

The tangential directions live on a periodic box ``[0, Lx)^(d-1)`` and are
represented by normalized Fourier coefficients (the DC coefficient of a
constant field equals that constant). The normal direction is a node grid
``0 = y_0 < ... < y_{Ny-1} = Ly`` on which finite-difference stencils act.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

RADIUS_GUARD = 700.0


class RadiusOverflowError(ValueError):
    """The requested exponential multiplier would overflow on this grid."""


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at ``z`` on nodes ``x``."""
    n = len(x) - 1
    c = np.zeros((n + 1, m + 1), dtype=np.result_type(x, float))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n + 1):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def fd_matrix(y: np.ndarray, m: int, accuracy: int) -> np.ndarray:
    """Dense differentiation matrix for ``d^m/dy^m``.

    Interior rows use a centered stencil of ``2r+1`` nodes with
    ``r = (m + accuracy - 1) // 2``; rows too close to either end fall back to
    a one-sided window of ``m + accuracy`` nodes.
    """
    n = len(y)
    if m == 0:
        return np.eye(n)
    r = max(1, (m + accuracy - 1) // 2)
    width_c = min(2 * r + 1, n)
    width_b = min(m + accuracy, n)
    D = np.zeros((n, n), dtype=np.result_type(y, float))
    for i in range(n):
        if i - r >= 0 and i + r <= n - 1:
            lo, w = i - r, width_c
        else:
            w = width_b
            lo = min(max(0, i - w // 2), n - w)
        idx = np.arange(lo, lo + w)
        D[i, idx] = fornberg_weights(y[i], y[idx], m)
    return D


@dataclass(frozen=True)
class Grid:
    """Tangential Fourier box times a normal node grid.

    Parameters
    ----------
    d : int
        Spatial dimension (2 or 3); there are ``d - 1`` tangential directions.
    Nx : int
        Fourier modes per tangential direction (power of two, at least 8).
    Ny : int
        Normal nodes (at least 16).
    Lx, Ly : float
        Tangential period and normal truncation height.
    stretch : float
        Zero for a uniform y grid; positive values cluster nodes near ``y = 0``
        through a tanh map.
    conormal_order : int
        Accuracy order of the stencils behind conormal derivatives and norms.
    """

    d: int = 2
    Nx: int = 32
    Ny: int = 64
    Lx: float = 2.0 * math.pi
    Ly: float = 8.0
    stretch: float = 0.0
    conormal_order: int = 12

    def __post_init__(self) -> None:
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if self.Nx < 8 or self.Nx & (self.Nx - 1):
            raise ValueError(f"Nx must be a power of two >= 8, got {self.Nx}")
        if self.Ny < 16:
            raise ValueError(f"Ny must be >= 16, got {self.Ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("Lx and Ly must be positive")
        if self.stretch < 0:
            raise ValueError("stretch must be nonnegative")

    # -- shapes -----------------------------------------------------------
    @property
    def ncomp(self) -> int:
        return self.d - 1

    @property
    def tshape(self) -> tuple[int, ...]:
        return (self.Nx,) * (self.d - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.ncomp, *self.tshape, self.Ny)

    @property
    def tangential_shape(self) -> tuple[int, ...]:
        return (self.ncomp, *self.tshape)

    @property
    def tangential_axes(self) -> tuple[int, ...]:
        return tuple(range(1, self.d))

    @property
    def area(self) -> float:
        """Measure of the tangential box, ``Lx^(d-1)``."""
        return self.Lx ** (self.d - 1)

    # -- normal grid ------------------------------------------------------
    @cached_property
    def y(self) -> np.ndarray:
        xi = np.linspace(0.0, 1.0, self.Ny)
        if self.stretch == 0:
            y = self.Ly * xi
        else:
            a = self.stretch
            y = self.Ly * (1.0 - np.tanh(a * (1.0 - xi)) / np.tanh(a))
        y[0] = 0.0
        y[-1] = self.Ly
        return y

    @cached_property
    def trapz_weights(self) -> np.ndarray:
        h = np.diff(self.y)
        w = np.zeros(self.Ny)
        w[:-1] += h / 2
        w[1:] += h / 2
        return w

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx) * (self.Lx / self.Nx)

    # -- tangential wavenumbers ------------------------------------------
    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer mode numbers per direction, in FFT order."""
        return np.fft.fftfreq(self.Nx, d=1.0 / self.Nx).round().astype(int)

    @cached_property
    def k1(self) -> np.ndarray:
        """Physical wavenumbers ``2 pi n / Lx`` along one direction."""
        return 2.0 * math.pi / self.Lx * self.mode_index

    @cached_property
    def k1_deriv(self) -> np.ndarray:
        """Wavenumbers for odd derivatives; the Nyquist entry is zeroed."""
        k = self.k1.copy()
        k[self.Nx // 2] = 0.0
        return k

    def k_axis(self, axis: int, *, deriv: bool = False) -> np.ndarray:
        """Wavenumber along tangential direction ``axis`` broadcast to ``tshape``."""
        base = self.k1_deriv if deriv else self.k1
        shape = [1] * (self.d - 1)
        shape[axis] = self.Nx
        return np.broadcast_to(base.reshape(shape), self.tshape)

    @cached_property
    def kmag(self) -> np.ndarray:
        """``|k|`` on the tangential mode lattice."""
        k2 = sum(self.k_axis(a) ** 2 for a in range(self.d - 1))
        return np.sqrt(k2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.abs(self.mode_index) < self.Nx / 3.0
        mask = np.ones(self.tshape, dtype=bool)
        for a in range(self.d - 1):
            shape = [1] * (self.d - 1)
            shape[a] = self.Nx
            mask = mask & keep.reshape(shape)
        return mask

    # -- normal stencils --------------------------------------------------
    @cached_property
    def _fd_cache(self) -> dict:
        return {}

    def diff_matrix(self, m: int, accuracy: int = 2) -> np.ndarray:
        key = ("d", m, accuracy)
        cache = self._fd_cache
        if key not in cache:
            cache[key] = fd_matrix(self.y, m, accuracy)
        return cache[key]

    def conormal_matrix(self, j: int) -> np.ndarray:
        """Matrix of ``Z^j = y^j d^j/dy^j`` built from high-order stencils."""
        key = ("z", j)
        cache = self._fd_cache
        if key not in cache:
            if j == 0:
                cache[key] = np.eye(self.Ny)
            else:
                D = self.diff_matrix(j, self.conormal_order)
                cache[key] = (self.y**j)[:, None] * D
        return cache[key]

    # -- helpers ----------------------------------------------------------
    def refine(self, factor: int = 2, *, tangential: bool = True) -> "Grid":
        """Same domain with ``factor`` times the resolution."""
        Nx = self.Nx * factor if tangential else self.Nx
        return Grid(self.d, Nx, (self.Ny - 1) * factor + 1, self.Lx, self.Ly,
                    self.stretch, self.conormal_order)

    def to_dict(self) -> dict:
        return {"d": self.d, "Nx": self.Nx, "Ny": self.Ny, "Lx": self.Lx,
                "Ly": self.Ly, "stretch": self.stretch,
                "conormal_order": self.conormal_order}


def default_Ly(gamma0: float, tol: float = 1e-12) -> float:
    """Normal truncation height with ``exp(-gamma0 Ly^2 / 3) < tol``."""
    return math.sqrt(-3.0 * math.log(tol) / gamma0)


def _check_shape(arr: np.ndarray, shape: tuple[int, ...]) -> None:
    if arr.shape != shape:
        raise ValueError(f"shape mismatch: expected {shape}, got {arr.shape}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Tangential Fourier coefficients on the normal node grid.

    ``coeffs`` has shape ``(ncomp, Nx, [Nx,] Ny)``. When ``real`` is set the
    coefficients are Hermitian in the tangential wavevector.
    """

    grid: Grid
    coeffs: np.ndarray
    real: bool = True

    def __post_init__(self) -> None:
        _check_shape(self.coeffs, self.grid.shape)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def replace(self, coeffs: np.ndarray, real: bool | None = None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.real if real is None else real)

    def copy(self) -> "SpectralField":
        return self.replace(self.coeffs.copy())

    def __add__(self, other):
        if isinstance(other, SpectralField):
            return self.replace(self.coeffs + other.coeffs, self.real and other.real)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            return self.replace(self.coeffs - other.coeffs, self.real and other.real)
        return NotImplemented

    def __neg__(self):
        return self.replace(-self.coeffs)

    def __mul__(self, c):
        if np.isscalar(c):
            return self.replace(self.coeffs * c, self.real and np.isrealobj(c))
        return NotImplemented

    __rmul__ = __mul__

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs - np.conj(_negate_k(self.coeffs, self.grid)))))

    def row(self, i: int) -> "TangentialField":
        """The tangential field at normal node ``i``."""
        return TangentialField(self.grid, self.coeffs[..., i].copy(), self.real)


@dataclass(frozen=True, eq=False)
class TangentialField:
    """Fourier coefficients of a y-independent field, shape ``(ncomp, Nx, [Nx])``."""

    grid: Grid
    coeffs: np.ndarray
    real: bool = True

    def __post_init__(self) -> None:
        _check_shape(self.coeffs, self.grid.tangential_shape)

    @classmethod
    def zeros(cls, grid: Grid) -> "TangentialField":
        return cls(grid, np.zeros(grid.tangential_shape, dtype=complex))

    @classmethod
    def constant(cls, grid: Grid, value) -> "TangentialField":
        c = np.zeros(grid.tangential_shape, dtype=complex)
        c[(slice(None),) + (0,) * (grid.d - 1)] = value
        return cls(grid, c)

    def replace(self, coeffs: np.ndarray, real: bool | None = None) -> "TangentialField":
        return TangentialField(self.grid, coeffs, self.real if real is None else real)

    def __add__(self, other):
        if isinstance(other, TangentialField):
            return self.replace(self.coeffs + other.coeffs, self.real and other.real)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, TangentialField):
            return self.replace(self.coeffs - other.coeffs, self.real and other.real)
        return NotImplemented

    def __neg__(self):
        return self.replace(-self.coeffs)

    def __mul__(self, c):
        if np.isscalar(c):
            return self.replace(self.coeffs * c, self.real and np.isrealobj(c))
        return NotImplemented

    __rmul__ = __mul__

    def extend(self, profile: np.ndarray | None = None) -> SpectralField:
        """Tensor product with a y profile (all ones by default)."""
        g = self.grid
        prof = np.ones(g.Ny) if profile is None else np.asarray(profile, dtype=float)
        return SpectralField(g, self.coeffs[..., None] * prof, self.real)

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs - np.conj(_negate_k(self.coeffs, self.grid)))))


Field = SpectralField | TangentialField


def _negate_k(c: np.ndarray, grid: Grid) -> np.ndarray:
    out = c
    for ax in grid.tangential_axes:
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def _tshape_pad(f: Field) -> tuple[slice, ...]:
    """Index that broadcasts a tangential array against ``f.coeffs``."""
    if isinstance(f, SpectralField):
        return (None, Ellipsis, None)
    return (None, Ellipsis)


def _multiplier(f: Field, symbol: np.ndarray):
    s = symbol[_tshape_pad(f)]
    return f.replace(f.coeffs * s)


# -- transforms ------------------------------------------------------------

def to_spectral(values: np.ndarray, grid: Grid) -> SpectralField:
    """Real-space samples ``(ncomp, Nx, [Nx,] Ny)`` to normalized coefficients."""
    values = np.asarray(values)
    _check_shape(values, grid.shape)
    c = np.fft.fftn(values, axes=grid.tangential_axes) / grid.Nx ** (grid.d - 1)
    return SpectralField(grid, c, real=np.isrealobj(values))


def from_spectral(f: Field) -> np.ndarray:
    g = f.grid
    v = np.fft.ifftn(f.coeffs, axes=g.tangential_axes) * g.Nx ** (g.d - 1)
    return v.real.copy() if f.real else v


def tangential_to_spectral(values: np.ndarray, grid: Grid) -> TangentialField:
    values = np.asarray(values)
    _check_shape(values, grid.tangential_shape)
    c = np.fft.fftn(values, axes=grid.tangential_axes) / grid.Nx ** (grid.d - 1)
    return TangentialField(grid, c, real=np.isrealobj(values))


# -- tangential multipliers -------------------------------------------------

def tangential_derivative(f: Field, order: int = 1, axis: int = 0) -> Field:
    """Multiply mode ``k`` by ``(i k_axis)^order``."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    if order == 0:
        return f.replace(f.coeffs.copy())
    k = f.grid.k_axis(axis, deriv=order % 2 == 1)
    return _multiplier(f, (1j * k) ** order)


def divergence(f: Field) -> Field:
    """``div_x f``; for d=3 the scalar is replicated into both component slots."""
    g = f.grid
    pad = _tshape_pad(f)[1:]
    out = sum(1j * g.k_axis(a, deriv=True)[pad] * f.coeffs[a] for a in range(g.ncomp))
    return f.replace(np.repeat(out[None], g.ncomp, axis=0))


def fractional_multiplier(f: Field, a: float, kind: str = "abs") -> Field:
    """Apply ``|grad_x|^a`` (``kind="abs"``) or ``<grad_x>^a`` (``kind="bracket"``)."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"exponent a must lie in [0, 1], got {a}")
    return fourier_power(f, a, kind)


def fourier_power(f: Field, a: float, kind: str = "abs") -> Field:
    """Unrestricted version of :func:`fractional_multiplier` (any real ``a``)."""
    km = f.grid.kmag
    if kind == "abs":
        if a < 0:
            raise ValueError("negative powers of |grad| are singular at k=0")
        sym = km ** a
    elif kind == "bracket":
        sym = (1.0 + km**2) ** (a / 2)
    else:
        raise ValueError(f"unknown multiplier kind {kind!r}")
    return _multiplier(f, sym)


def radius_symbol(grid: Grid, sigma: float, p: int = 1) -> np.ndarray:
    if p not in (1, 2):
        raise ValueError("p must be 1 (analytic) or 2 (Gevrey)")
    kp = grid.kmag ** (1.0 / p)
    if abs(sigma) * float(kp.max()) > RADIUS_GUARD:
        raise RadiusOverflowError(
            f"|sigma| * max|k|^(1/{p}) = {abs(sigma) * kp.max():.1f} exceeds {RADIUS_GUARD}; "
            "radius too large for this grid")
    return np.exp(sigma * kp)


def radius_multiplier(f: Field, sigma: float, p: int = 1) -> Field:
    """Apply ``exp(sigma |grad_x|^(1/p))``; negative ``sigma`` inverts it."""
    if sigma == 0:
        return f.replace(f.coeffs.copy())
    return _multiplier(f, radius_symbol(f.grid, sigma, p))


def regularize_Rn(f: Field, n: float | None) -> Field:
    """Zero every mode with ``|k| > n``; ``n=None`` means no cutoff."""
    if n is None:
        return f.replace(f.coeffs.copy())
    if n <= 0:
        raise ValueError("n must be positive")
    return _multiplier(f, (f.grid.kmag <= n).astype(float))


def dealias(f: Field) -> Field:
    return _multiplier(f, f.grid.dealias_mask.astype(float))


# -- normal-direction calculus ---------------------------------------------

def _apply_y(f: SpectralField, M: np.ndarray) -> SpectralField:
    return f.replace(f.coeffs @ M.T)


def normal_derivative(f: SpectralField, order: int = 1, accuracy: int = 2) -> SpectralField:
    if order not in (1, 2):
        raise ValueError("normal_derivative supports order 1 or 2")
    if f.grid.Ny < order + 2:
        raise ValueError("too few normal nodes for this stencil")
    return _apply_y(f, f.grid.diff_matrix(order, accuracy))


def conormal_Z(f: SpectralField, j: int) -> SpectralField:
    """``y^j d^j f / dy^j``."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    if j + f.grid.conormal_order > f.grid.Ny:
        raise ValueError(f"Z^{j} stencil does not fit Ny={f.grid.Ny}")
    return _apply_y(f, f.grid.conormal_matrix(j))


def antiderivative_y(f: SpectralField) -> SpectralField:
    """Cumulative trapezoid from ``y = 0``."""
    c = cumulative_trapezoid(f.coeffs, f.grid.y, axis=-1, initial=0.0)
    return f.replace(c)


def multiply_profile(f: SpectralField, profile: np.ndarray) -> SpectralField:
    return f.replace(f.coeffs * np.asarray(profile)[None])


# -- nonlinear products --------------------------------------------------------

def product(f: Field, g: Field) -> Field:
    """Dealiased pointwise product, evaluated in real space.

    ``f`` and ``g`` must have matching component counts, or one of them must
    have a single meaningful component (its first), which then multiplies every
    component of the other.
    """
    fv = from_spectral(dealias(f))
    gv = from_spectral(dealias(g))
    if isinstance(f, TangentialField) and isinstance(g, SpectralField):
        fv = fv[..., None]
    elif isinstance(f, SpectralField) and isinstance(g, TangentialField):
        gv = gv[..., None]
    pv = fv * gv
    grid = f.grid
    target = f if isinstance(f, SpectralField) or isinstance(g, TangentialField) else g
    out = np.fft.fftn(pv, axes=grid.tangential_axes) / grid.Nx ** (grid.d - 1)
    real = f.real and g.real
    if isinstance(target, SpectralField):
        res = SpectralField(grid, out, real)
    else:
        res = TangentialField(grid, out, real)
    return dealias(res)


def component(f: Field, a: int) -> Field:
    """Component ``a`` replicated so the result has ``ncomp`` components."""
    c = np.repeat(f.coeffs[a:a + 1], f.grid.ncomp, axis=0)
    return f.replace(c)


# -- serialization --------------------------------------------------------------

_HEADER = struct.Struct("<7d")


def save_field(f: SpectralField, path: str | Path) -> None:
    """Write real-space samples with a little-endian double header.

    Header: d, Nx, Ny, Lx, Ly, component count, stretch.
    """
    g = f.grid
    vals = from_spectral(f)
    if np.iscomplexobj(vals):
        raise ValueError("only real fields can be serialized")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.d, g.Nx, g.Ny, g.Lx, g.Ly, g.ncomp, g.stretch))
        fh.write(np.ascontiguousarray(vals, dtype="<f8").tobytes())


def load_field(path: str | Path, conormal_order: int = 12) -> SpectralField:
    raw = Path(path).read_bytes()
    d, Nx, Ny, Lx, Ly, ncomp, stretch = _HEADER.unpack_from(raw)
    grid = Grid(int(d), int(Nx), int(Ny), Lx, Ly, stretch, conormal_order)
    if int(ncomp) != grid.ncomp:
        raise ValueError("component count does not match dimension")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return to_spectral(vals.reshape(grid.shape).astype(float), grid)


def field_to_csv(f: SpectralField, path: str | Path, max_points: int = 200_000) -> None:
    """Long-format CSV: component, tangential coordinates, y, value."""
    g = f.grid
    vals = from_spectral(f)
    if vals.size > max_points:
        raise ValueError("grid too large for CSV export")
    names = ["x"] if g.d == 2 else ["x1", "x2"]
    with open(path, "w") as fh:
        fh.write(",".join(["component", *names, "y", "value"]) + "\n")
        for idx in np.ndindex(vals.shape):
            comp, *tidx, iy = idx
            coords = [f"{g.x[i]:.17g}" for i in tidx]
            fh.write(f"{comp},{','.join(coords)},{g.y[iy]:.17g},{vals[idx]:.17g}\n")


def field_from_csv(path: str | Path, grid: Grid) -> SpectralField:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    vals = data[:, -1].reshape(grid.shape)
    return to_spectral(vals, grid)


__all__ = [
    "Grid", "SpectralField", "TangentialField", "RadiusOverflowError",
    "to_spectral", "from_spectral", "tangential_to_spectral",
    "tangential_derivative", "divergence", "fractional_multiplier", "fourier_power",
    "radius_multiplier", "radius_symbol", "regularize_Rn", "dealias",
    "normal_derivative", "conormal_Z", "antiderivative_y", "multiply_profile",
    "product", "component", "save_field", "load_field", "field_to_csv",
    "field_from_csv", "default_Ly", "fd_matrix", "fornberg_weights",
]
