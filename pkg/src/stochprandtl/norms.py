"""
Weighted conormal Sobolev norms and the parabolic energy functional.

All norms are evaluated with Parseval in the tangential variables and the
trapezoid rule on the normal nodes, so for a field ``f`` with normalized
coefficients ``f_k(y)``

    ||f||^2 = Lx^(d-1) * sum_k int |f_k(y)|^2 dy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .fields import (
    Grid,
    SpectralField,
    TangentialField,
    fourier_power,
    normal_derivative,
    radius_multiplier,
)

WEIGHT_GUARD = 700.0
WEIGHT_KINDS = ("gaussian", "polynomial")


@dataclass(frozen=True)
class NormSpec:
    """Parameters selecting a weighted norm.

    Attributes
    ----------
    s : int
        Total number of conormal and tangential derivatives.
    gamma : float
        Weight parameter; ``exp(gamma y^2)`` or ``(1 + y)^gamma``.
    sigma : float
        Tangential radius for the analytic/Gevrey multipliers.
    weight_kind : str
        ``"gaussian"`` or ``"polynomial"``.
    gevrey_p : int
        1 for ``exp(sigma |k|)``, 2 for ``exp(sigma |k|^(1/2))``.
    """

    s: int = 0
    gamma: float = 0.25
    sigma: float = 0.0
    weight_kind: str = "gaussian"
    gevrey_p: int = 1

    def __post_init__(self) -> None:
        if self.s < 0 or int(self.s) != self.s:
            raise ValueError(f"s must be a nonnegative integer, got {self.s}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.weight_kind not in WEIGHT_KINDS:
            raise ValueError(f"weight_kind must be one of {WEIGHT_KINDS}")
        if self.gevrey_p not in (1, 2):
            raise ValueError("gevrey_p must be 1 or 2")

    def with_(self, **kw) -> "NormSpec":
        return replace(self, **kw)


def weight_profile(grid: Grid, gamma: float, kind: str = "gaussian") -> np.ndarray:
    y = grid.y
    if kind == "gaussian":
        if 2.0 * gamma * grid.Ly**2 > WEIGHT_GUARD:
            raise OverflowError(
                f"gaussian weight exp(gamma*Ly^2) overflows: gamma={gamma}, Ly={grid.Ly}")
        return np.exp(gamma * y**2)
    if kind == "polynomial":
        return (1.0 + y) ** gamma
    raise ValueError(f"unknown weight kind {kind!r}")


@lru_cache(maxsize=64)
def _tangential_symbol(grid: Grid, m: int) -> np.ndarray:
    """``sum_{|kappa| <= m} prod_a |(i k_a)^kappa_a|^2`` on the mode lattice."""
    out = np.zeros(grid.tshape)
    if m < 0:
        return out
    ndir = grid.d - 1
    for kappa in itertools.product(range(m + 1), repeat=ndir):
        if sum(kappa) > m:
            continue
        term = np.ones(grid.tshape)
        for a, o in enumerate(kappa):
            if o:
                term = term * grid.k_axis(a, deriv=o % 2 == 1) ** (2 * o)
        out = out + term
    return out


def _mode_energy(c: np.ndarray, grid: Grid, wsq: np.ndarray) -> np.ndarray:
    """Weighted trapezoid integral of ``|c|^2`` in y, summed over components."""
    return np.sum((np.abs(c) ** 2) @ (grid.trapz_weights * wsq), axis=0)


def _hs_sq(f: SpectralField, s: int, wsq: np.ndarray, kmax: int | None = None,
           jmax: int | None = None) -> float:
    g = f.grid
    if s < 0:
        return 0.0
    total = 0.0
    jtop = s if jmax is None else min(s, jmax)
    if jtop + g.conormal_order > g.Ny and jtop > 0:
        raise ValueError(f"s={s} needs more normal nodes than Ny={g.Ny}")
    for j in range(jtop + 1):
        cj = f.coeffs if j == 0 else f.coeffs @ g.conormal_matrix(j).T
        m = s - j if kmax is None else min(s - j, kmax)
        total += float(np.sum(_tangential_symbol(g, m) * _mode_energy(cj, g, wsq)))
    return g.area * total


def _wsq(f: SpectralField, gamma: float, kind: str, extra_y: bool = False) -> np.ndarray:
    w = weight_profile(f.grid, gamma, kind)
    if extra_y:
        w = w * f.grid.y
    return w**2


def _dy(f: SpectralField) -> SpectralField:
    return normal_derivative(f, 1, accuracy=f.grid.conormal_order)


def hs_conormal_norm(f: SpectralField, spec: NormSpec) -> float:
    """Weighted conormal Sobolev norm, ``sum_{|k|+j<=s} ||w Z^j d_x^k f||^2``."""
    return math.sqrt(_hs_sq(f, spec.s, _wsq(f, spec.gamma, spec.weight_kind)))


def xs_norm_sq(f: SpectralField, spec: NormSpec, *, extra_y: bool = False) -> float:
    if spec.s < 1:
        raise ValueError("the X^s norm needs s >= 1")
    wsq = _wsq(f, spec.gamma, spec.weight_kind, extra_y)
    return _hs_sq(f, spec.s, wsq) + _hs_sq(_dy(f), spec.s - 1, wsq)


def xs_norm(f: SpectralField, spec: NormSpec) -> float:
    """``||f||_{H^s}^2 + ||d_y f||_{H^{s-1}}^2``, square-rooted. Radius is ignored."""
    return math.sqrt(xs_norm_sq(f, spec))


def anisotropic_norm(f: SpectralField, s1: int, s2: int, gamma: float,
                     weight_kind: str = "gaussian") -> float:
    """Sum restricted to ``|k| <= s1`` and ``j <= s2``."""
    if s1 < 0 or s2 < 0:
        raise ValueError("s1 and s2 must be nonnegative")
    wsq = _wsq(f, gamma, weight_kind)
    return math.sqrt(_hs_sq(f, s1 + s2, wsq, kmax=s1, jmax=s2))


def analytic_sobolev_norm(f: SpectralField, spec: NormSpec) -> float:
    """X^s norm of ``exp(sigma |grad_x|) f``."""
    return xs_norm(radius_multiplier(f, spec.sigma, p=1), spec)


def gevrey_norm(f: SpectralField, spec: NormSpec) -> float:
    """X^s norm of ``exp(sigma |grad_x|^(1/2)) f``, with the weight of ``spec``."""
    return xs_norm(radius_multiplier(f, spec.sigma, p=2), spec)


def radius_norm(f: SpectralField, spec: NormSpec) -> float:
    """Dispatch on ``spec.gevrey_p``."""
    return xs_norm(radius_multiplier(f, spec.sigma, p=spec.gevrey_p), spec)


def hx_norm(U: TangentialField, s: int, sigma: float) -> float:
    """``Lx^(d-1) sum_k exp(2 sigma |k|) (1+|k|^2)^s |U_k|^2``, square-rooted."""
    g = U.grid
    km = g.kmag
    expo = 2.0 * sigma * km
    if float(expo.max()) > 2 * WEIGHT_GUARD:
        raise OverflowError("radius too large for this grid")
    sym = np.exp(expo) * (1.0 + km**2) ** s
    return math.sqrt(g.area * float(np.sum(sym * np.sum(np.abs(U.coeffs) ** 2, axis=0))))


def tilde_norm(f: SpectralField, spec: NormSpec) -> float:
    """X^s norm with an extra factor ``y`` in the weight."""
    return math.sqrt(xs_norm_sq(f, spec, extra_y=True))


def dissipation_sq(f_sigma: SpectralField, spec: NormSpec) -> float:
    """``|| |grad_x|^(1/2) f ||^2 + || d_y f ||^2`` in the X^s norm."""
    half = fourier_power(f_sigma, 0.5)
    return xs_norm_sq(half, spec) + xs_norm_sq(_dy(f_sigma), spec)


@dataclass(frozen=True)
class EnergyTrace:
    """Running sup and left-endpoint dissipation integral."""

    times: tuple[float, ...] = ()
    sup_norm_sq: tuple[float, ...] = ()
    dissipation_integral: tuple[float, ...] = ()
    last_rate: float = 0.0

    @property
    def energy(self) -> float:
        if not self.times:
            return 0.0
        return math.sqrt(self.sup_norm_sq[-1] + self.dissipation_integral[-1])

    def energies(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.sup_norm_sq) + np.asarray(self.dissipation_integral))

    def to_csv(self) -> str:
        lines = ["t,sup_sq,dissipation_integral,energy"]
        for t, a, b, e in zip(self.times, self.sup_norm_sq, self.dissipation_integral,
                              self.energies()):
            lines.append(f"{t:.17g},{a:.17g},{b:.17g},{e:.17g}")
        return "\n".join(lines) + "\n"


def energy_append(trace: EnergyTrace, t: float, norm_sq: float, rate: float) -> EnergyTrace:
    """Append precomputed ``||w_sigma||^2`` and dissipation rate at time ``t``."""
    if trace.times:
        if not t > trace.times[-1]:
            raise ValueError(f"time must increase: {t} <= {trace.times[-1]}")
        sup = max(trace.sup_norm_sq[-1], norm_sq)
        integral = trace.dissipation_integral[-1] + (t - trace.times[-1]) * trace.last_rate
    else:
        sup, integral = norm_sq, 0.0
    return EnergyTrace(trace.times + (t,), trace.sup_norm_sq + (sup,),
                       trace.dissipation_integral + (integral,), rate)


def parabolic_energy_update(trace: EnergyTrace, t: float, f_sigma: SpectralField,
                            spec: NormSpec) -> EnergyTrace:
    """Add the snapshot ``f_sigma`` (already radius-weighted) at time ``t``."""
    return energy_append(trace, t, xs_norm_sq(f_sigma, spec), dissipation_sq(f_sigma, spec))


__all__ = [
    "NormSpec", "EnergyTrace", "weight_profile", "hs_conormal_norm", "xs_norm",
    "xs_norm_sq", "anisotropic_norm", "analytic_sobolev_norm", "gevrey_norm",
    "radius_norm", "hx_norm", "tilde_norm", "dissipation_sq",
    "parabolic_energy_update", "energy_append",
]
