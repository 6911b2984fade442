"""
Deterministic building blocks of the homogenized boundary-layer equation.

Notation: ``w = u - u^s`` with ``u^s = psi(t, y) U(t, x)`` the corrector lift
of the outflow velocity ``U``.  The truncated drift is

    -chi^2(E) [B1(w, w) + B1(w, u^s) + B1(u^s, w) + B2(w + u^s, w + u^s)]
    + B1(U - u^s, u^s) - (1 - psi) grad_x P + d_y^2 w

with ``B1(u, v) = (u . grad_x) v`` and ``B2(u, v) = -d_y^{-1}(div_x u) d_y v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .fields import (
    Grid,
    SpectralField,
    TangentialField,
    antiderivative_y,
    component,
    divergence,
    normal_derivative,
    product,
    tangential_derivative,
)

CORRECTOR_KINDS = ("erf_heat", "exp_shear")


@dataclass(frozen=True)
class CorrectorParams:
    """Corrector selection: ``erf_heat`` needs ``gamma0``, ``exp_shear`` needs ``beta``."""

    kind: str = "erf_heat"
    gamma0: float | None = 0.25
    beta: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "erf_heat":
            if self.gamma0 is None or self.beta is not None or not self.gamma0 > 0:
                raise ValueError("erf_heat needs a positive gamma0 and no beta")
        elif self.kind == "exp_shear":
            if self.beta is None or self.gamma0 is not None or not self.beta > 0:
                raise ValueError("exp_shear needs a positive beta and no gamma0")
        else:
            raise ValueError(f"kind must be one of {CORRECTOR_KINDS}")

    def profile(self, t: float, y: np.ndarray) -> np.ndarray:
        if self.kind == "erf_heat":
            return corrector_psi(t, y, self.gamma0)
        return shear_Psi(y, self.beta)

    def profile_dt(self, t: float, y: np.ndarray) -> np.ndarray:
        """Exact time derivative of the profile."""
        if self.kind == "exp_shear":
            return np.zeros_like(np.asarray(y, dtype=float))
        s = t + 1.0 / (8.0 * self.gamma0)
        y = np.asarray(y, dtype=float)
        return -y / (2.0 * math.sqrt(math.pi) * s**1.5) * np.exp(-y**2 / (4.0 * s))


@dataclass(frozen=True)
class CutoffParams:
    """Truncation threshold ``M`` and the bridge profile id."""

    M: float = 1.0
    profile: str = "bump"

    def __post_init__(self) -> None:
        if not self.M > 0:
            raise ValueError("M must be positive")
        if self.profile != "bump":
            raise ValueError("only the 'bump' bridge is implemented")


@dataclass(frozen=True, eq=False)
class OutflowState:
    """Outflow velocity ``U`` and tangential pressure gradient at time ``t``."""

    U: TangentialField
    gradP: TangentialField
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.U.grid != self.gradP.grid:
            raise ValueError("U and gradP live on different grids")

    @classmethod
    def zero(cls, grid: Grid, t: float = 0.0) -> "OutflowState":
        return cls(TangentialField.zeros(grid), TangentialField.zeros(grid), t)


@dataclass(frozen=True)
class PhysicsParams:
    corrector: CorrectorParams = CorrectorParams()
    cutoff: CutoffParams = CutoffParams()


def corrector_psi(t: float, y, gamma0: float):
    """``erf(y / (2 sqrt(t + 1/(8 gamma0))))``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return erf(np.asarray(y, dtype=float) / (2.0 * math.sqrt(t + 1.0 / (8.0 * gamma0))))


def shear_Psi(y, beta: float):
    """Stationary shear profile ``1 - exp(-sqrt(beta) y)``."""
    return -np.expm1(-math.sqrt(beta) * np.asarray(y, dtype=float))


def corrector_heat_residual(grid: Grid, t: float, gamma0: float, dt: float | None = None) -> float:
    """Max over interior nodes of ``|D_t psi - D_y^2 psi|``.

    ``D_t`` is a centered difference (one-sided near ``t = 0``) with step
    ``dt``, by default the first grid spacing. ``D_y^2`` is the second-order
    stencil used by the solver.
    """
    y = grid.y
    h = dt if dt is not None else float(y[1] - y[0])
    if t - h < 0:
        # second-order one-sided difference
        dpsi = (-3 * corrector_psi(t, y, gamma0) + 4 * corrector_psi(t + h, y, gamma0)
                - corrector_psi(t + 2 * h, y, gamma0)) / (2 * h)
    else:
        dpsi = (corrector_psi(t + h, y, gamma0) - corrector_psi(t - h, y, gamma0)) / (2 * h)
    d2 = grid.diff_matrix(2, 2) @ corrector_psi(t, y, gamma0)
    return float(np.max(np.abs(dpsi - d2)[1:-1]))


def boundary_profile(t: float, U: TangentialField, params: CorrectorParams) -> SpectralField:
    """``u^s(t, x, y) = profile(t, y) U(x)``."""
    return U.extend(params.profile(t, U.grid.y))


def bilinear_B1(u: SpectralField, v: SpectralField) -> SpectralField:
    """``(u . grad_x) v``, dealiased."""
    g = u.grid
    out = None
    for a in range(g.ncomp):
        term = product(component(u, a), tangential_derivative(v, 1, axis=a))
        out = term if out is None else out + term
    return out


def bilinear_B2(u: SpectralField, v: SpectralField) -> SpectralField:
    """``-d_y^{-1}(div_x u) d_y v``, dealiased."""
    vert = antiderivative_y(divergence(u))
    return -product(vert, normal_derivative(v, 1))


def vertical_velocity(u: SpectralField) -> SpectralField:
    """``v = -d_y^{-1}(div_x u)``, in the first component slot (replicated for d=3)."""
    return -antiderivative_y(divergence(u))


def _bump_step(x):
    """Smooth step: 0 for x <= 0, 1 for x >= 1, symmetric about 1/2."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f0 = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        f1 = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
        return f0 / (f0 + f1)


def cutoff_chi(z, params: CutoffParams):
    """Smooth cutoff: 1 on ``z <= 2M``, 0 on ``z >= 3M``, ``1/2`` at ``2.5M``."""
    out = _bump_step((3.0 * params.M - np.asarray(z, dtype=float)) / params.M)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class DriftParts:
    """Drift split by role so the solver can switch pieces on and off."""

    convection: SpectralField   # bracket multiplied by -chi^2
    forcing: SpectralField      # B1(U - u^s, u^s) - (1 - psi) grad P
    diffusion: SpectralField    # d_y^2 w

    def total(self, chi_sq: float) -> SpectralField:
        return self.convection * (-chi_sq) + self.forcing + self.diffusion


def drift_parts(w: SpectralField, state: OutflowState, t: float, params: PhysicsParams,
                *, convection_source: SpectralField | None = None) -> DriftParts:
    """Separate pieces of the homogenized drift.

    ``convection_source`` replaces ``w`` inside the quadratic bracket (used by
    the iteration schemes, where the transport field is a previous iterate).
    """
    g = w.grid
    psi = params.corrector.profile(t, g.y)
    us = state.U.extend(psi)
    a = w if convection_source is None else convection_source
    conv = (bilinear_B1(a, w) + bilinear_B1(a, us) + bilinear_B1(us, w)
            + bilinear_B2(a + us, w + us))
    forcing = bilinear_B1(state.U.extend(1.0 - psi), us) - state.gradP.extend(1.0 - psi)
    return DriftParts(conv, forcing, normal_derivative(w, 2))


def homogenized_rhs(w: SpectralField, state: OutflowState, t: float, params: PhysicsParams,
                    energy: float) -> SpectralField:
    """Full truncated drift with the cutoff evaluated at the supplied energy."""
    chi = cutoff_chi(energy, params.cutoff)
    return drift_parts(w, state, t, params).total(chi * chi)


__all__ = [
    "CorrectorParams", "CutoffParams", "OutflowState", "PhysicsParams", "DriftParts",
    "corrector_psi", "shear_Psi", "corrector_heat_residual", "boundary_profile",
    "bilinear_B1", "bilinear_B2", "vertical_velocity", "cutoff_chi", "drift_parts",
    "homogenized_rhs",
]
