"""
Time stepping for the homogenized, truncated boundary-layer equation.

Every scheme uses the same IMEX step: implicit backward-Euler diffusion in y
(one tridiagonal solve per tangential mode, Dirichlet rows at both ends),
explicit convection and forcing, and an Euler-Maruyama noise increment.
What differs between the schemes is which field feeds the nonlinearity and
which energies enter the cutoff.

* Scheme I: the nonlinearity acts on the unknown itself, with ``R_n`` applied
  to the transported factor.
* Scheme II: Picard iteration; iterate ``m + 1`` is driven by iterate ``m``.
* Scheme III: a linear equation driven by a frozen process ``w`` and the
  previous inner iterate only through the cutoff.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .fields import (
    Grid,
    SpectralField,
    TangentialField,
    antiderivative_y,
    divergence,
    from_spectral,
    normal_derivative,
    radius_multiplier,
    regularize_Rn,
)
from .noise import NoiseSpec, WienerPath, evaluate_F, evaluate_F_limit
from .norms import EnergyTrace, NormSpec, dissipation_sq, energy_append, hx_norm, xs_norm_sq
from .physics import (
    CorrectorParams,
    CutoffParams,
    OutflowState,
    PhysicsParams,
    bilinear_B1,
    bilinear_B2,
    cutoff_chi,
)


class PathAbort(RuntimeError):
    """Raised internally when a path produces non-finite values."""


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    """Solver and model parameters for the local schemes.

    ``n=None`` disables the tangential regularizer. ``lam=None`` picks the
    smallest radius decay rate with ``sigma0 / (2 lam) >= T``.
    """

    grid: Grid
    s: int = 4
    gamma0: float = 0.25
    sigma0: float = 0.1
    lam: float | None = None
    delta: float = 2.0
    M: float = 1.0
    N: float = 10.0
    dt: float = 1e-3
    T: float = 0.05
    n: float | None = None
    m_max: int = 8
    picard_tol: float = 1e-12
    noise: NoiseSpec | None = None

    def __post_init__(self) -> None:
        if not self.delta > 1:
            raise ValueError("delta must exceed 1")
        if not (self.dt > 0 and self.T > 0 and self.sigma0 > 0 and self.gamma0 > 0):
            raise ValueError("dt, T, sigma0 and gamma0 must be positive")
        if self.lam is None:
            object.__setattr__(self, "lam", self.sigma0 / (2.0 * self.T))
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.M <= 0 or self.N <= 0:
            raise ValueError("M and N must be positive")
        if self.noise is not None and self.noise.grid != self.grid:
            raise ValueError("noise spec lives on a different grid")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def physics(self) -> PhysicsParams:
        return PhysicsParams(CorrectorParams("erf_heat", self.gamma0), CutoffParams(self.M))

    @property
    def K(self) -> int:
        return self.noise.K if self.noise is not None else 1

    def sigma(self, t: float) -> float:
        return self.sigma0 - self.lam * t

    def gamma(self, t: float) -> float:
        return self.gamma0 / (1.0 + t) ** self.delta

    def norm_spec(self, t: float) -> NormSpec:
        return NormSpec(self.s, self.gamma(t), max(self.sigma(t), 0.0))

    def summary(self) -> dict:
        return {
            "grid": self.grid.to_dict(), "s": self.s, "gamma0": self.gamma0,
            "sigma0": self.sigma0, "lam": self.lam, "delta": self.delta, "M": self.M,
            "N": self.N, "dt": self.dt, "T": self.T, "n": self.n, "m_max": self.m_max,
            "picard_tol": self.picard_tol, "K": self.K,
            "noise": None if self.noise is None else _noise_digest(self.noise),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.summary(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _noise_digest(spec: NoiseSpec) -> str:
    h = hashlib.sha256()
    for t in spec.terms:
        h.update(repr(t.n).encode())
        h.update(t.a0.tobytes())
        h.update(t.abar.tobytes())
    if spec.linear is not None:
        h.update(spec.linear.G0.tobytes())
        h.update(spec.linear.Gbar.tobytes())
        h.update(repr(spec.linear.a).encode())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class RadiusState:
    sigma: float
    gamma: float

    @classmethod
    def at(cls, config: SchemeConfig, t: float) -> "RadiusState":
        return cls(config.sigma(t), config.gamma(t))


# -- outflow -----------------------------------------------------------------------

OutflowSchedule = Callable[[int], OutflowState]


def static_outflow(U: TangentialField, gradP: TangentialField | None = None) -> OutflowSchedule:
    """Time-independent outflow pair."""
    gp = TangentialField.zeros(U.grid) if gradP is None else gradP
    st = OutflowState(U, gp, 0.0)
    return lambda k: st


def trajectory_outflow(states: Sequence[OutflowState]) -> OutflowSchedule:
    """Outflow read from a precomputed trajectory, one state per step."""
    return lambda k: states[min(k, len(states) - 1)]


# -- monitors -------------------------------------------------------------------------

@dataclass
class StoppingMonitors:
    """First-trigger times; once set they never change."""

    T_cap: float
    tau_out: float | None = None
    tau_3M: float | None = None

    @classmethod
    def for_config(cls, config: SchemeConfig) -> "StoppingMonitors":
        return cls(min(1.0 / (16.0 * config.gamma0), config.sigma0 / (2.0 * config.lam)))

    @property
    def T_star(self) -> float:
        return self.T_cap if self.tau_out is None else min(self.T_cap, self.tau_out)

    def observe(self, t: float, energy: float, outflow: OutflowState, config: SchemeConfig) -> None:
        if self.tau_out is None:
            Unorm = (1.0 + t) ** config.delta * hx_norm(outflow.U, config.s + 2, config.sigma0)
            Pnorm = hx_norm(outflow.gradP, config.s + 1, config.sigma0)
            if Unorm >= 2 * config.N or Pnorm >= 2 * config.N:
                self.tau_out = t
        if self.tau_3M is None and energy >= 3 * config.M:
            self.tau_3M = t


# -- records ------------------------------------------------------------------------------

@dataclass
class RunRecord:
    """Time series and provenance for one simulated path."""

    seed: int
    path_index: int
    config_hash: str
    scheme: str
    times: list = field(default_factory=list)
    norm_sq: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    chi_sq: list = field(default_factory=list)
    tau_out: float | None = None
    tau_3M: float | None = None
    T_star: float | None = None
    aborted: bool = False
    abort_time: float | None = None
    abort_reason: str | None = None
    warnings: list = field(default_factory=list)
    picard_increments: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Field values at the step times ``t_k = k dt``."""

    grid: Grid
    dt: float
    coeffs: np.ndarray  # (steps + 1, *grid.shape)

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def at(self, k: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[k])

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self))


# -- core step -------------------------------------------------------------------------------

def _diffusion_banded(grid: Grid, dt: float) -> np.ndarray:
    """Banded form of ``I - dt D_yy`` with identity Dirichlet rows."""
    D = grid.diff_matrix(2, 2)
    A = np.eye(grid.Ny) - dt * D
    A[0, :] = 0.0
    A[0, 0] = 1.0
    A[-1, :] = 0.0
    A[-1, -1] = 1.0
    ab = np.zeros((3, grid.Ny))
    ab[0, 1:] = np.diag(A, 1)
    ab[1] = np.diag(A)
    ab[2, :-1] = np.diag(A, -1)
    return ab


def implicit_diffusion(rhs: np.ndarray, grid: Grid, dt: float) -> np.ndarray:
    """Solve ``(I - dt D_yy) w = rhs`` per tangential mode with ``w = 0`` at both ends."""
    ab = _diffusion_banded(grid, dt)
    b = rhs.reshape(-1, grid.Ny).T.copy()
    b[0] = 0.0
    b[-1] = 0.0
    sol = solve_banded((1, 1), ab, b.real) + 1j * solve_banded((1, 1), ab, b.imag)
    return sol.T.reshape(rhs.shape)


def _enforce_dirichlet(c: np.ndarray) -> np.ndarray:
    c[..., 0] = 0.0
    c[..., -1] = 0.0
    return c


def heat_init(w0: SpectralField, t: float, dt: float = 1e-3) -> SpectralField:
    """Backward-Euler heat flow in y to time ``t`` (the final step is shortened)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    c = _enforce_dirichlet(w0.coeffs.copy())
    if t == 0:
        return w0.replace(c)
    n = max(1, int(math.ceil(t / dt - 1e-12)))
    h = t / n
    for _ in range(n):
        c = implicit_diffusion(c, w0.grid, h)
    return w0.replace(c)


def heat_trajectory(w0: SpectralField, steps: int, dt: float) -> Trajectory:
    g = w0.grid
    out = np.empty((steps + 1, *g.shape), dtype=complex)
    out[0] = _enforce_dirichlet(w0.coeffs.copy())
    for k in range(steps):
        out[k + 1] = implicit_diffusion(out[k], g, dt)
    return Trajectory(g, dt, out)


def convection_bracket(b: SpectralField, us: SpectralField, n: float | None) -> SpectralField:
    """``B1(b, Rb) + B1(b, u^s) + B1(u^s, Rb) + B2(Rb + u^s, b + u^s)``."""
    Rb = regularize_Rn(b, n)
    return (bilinear_B1(b, Rb) + bilinear_B1(b, us) + bilinear_B1(us, Rb)
            + bilinear_B2(Rb + us, b + us))


def forcing_term(state: OutflowState, psi: np.ndarray) -> SpectralField:
    """``B1(U - u^s, u^s) - (1 - psi) grad_x P``."""
    us = state.U.extend(psi)
    return bilinear_B1(state.U.extend(1.0 - psi), us) - state.gradP.extend(1.0 - psi)


def noise_fields(b: SpectralField, state: OutflowState, psi: np.ndarray, spec: NoiseSpec | None,
                 n: float | None) -> list[SpectralField] | None:
    """``F(R b + u^s) - psi Fbar(U)`` per mode, or None without noise."""
    if spec is None or spec.is_zero():
        return None
    us = state.U.extend(psi)
    F = evaluate_F(regularize_Rn(b, n) + us, spec)
    Fbar = evaluate_F_limit(state.U, spec)
    return [Fi - Fb.extend(psi) for Fi, Fb in zip(F, Fbar)]


@dataclass(frozen=True, eq=False)
class StepContext:
    """Inputs of one IMEX step that are fixed at the step start."""

    t: float
    outflow: OutflowState
    dB: np.ndarray
    chi_factor: float


def linear_spde_step(w_now: SpectralField, b: SpectralField, ctx: StepContext,
                     config: SchemeConfig, *, instrument: dict | None = None) -> SpectralField:
    """One IMEX step with the nonlinearity evaluated on the given field ``b``.

    ``chi_factor`` multiplies the convection bracket and the noise; when it is
    zero both contributions are skipped entirely.
    """
    g = w_now.grid
    dt = config.dt
    psi = config.physics.corrector.profile(ctx.t, g.y)
    rhs = w_now.coeffs + dt * forcing_term(ctx.outflow, psi).coeffs
    conv_norm = noise_norm = 0.0
    if ctx.chi_factor != 0.0:
        us = ctx.outflow.U.extend(psi)
        conv = convection_bracket(b, us, config.n).coeffs
        rhs = rhs - (dt * ctx.chi_factor) * conv
        conv_norm = float(np.max(np.abs(conv))) * abs(ctx.chi_factor)
        nf = noise_fields(b, ctx.outflow, psi, config.noise, config.n)
        if nf is not None:
            inc = sum(Fi.coeffs * float(db) for Fi, db in zip(nf, ctx.dB))
            rhs = rhs + ctx.chi_factor * inc
            noise_norm = float(np.max(np.abs(inc))) * abs(ctx.chi_factor)
    if instrument is not None:
        instrument["convection"] = conv_norm
        instrument["noise"] = noise_norm
    out = implicit_diffusion(rhs, g, dt)
    if not np.all(np.isfinite(out)):
        raise PathAbort(f"non-finite field at t={ctx.t + dt:.6g}")
    return w_now.replace(out)


# -- energies ---------------------------------------------------------------------------------

def energy_sample(w: SpectralField, t: float, config: SchemeConfig) -> tuple[float, float]:
    """``(||w_sigma||^2_{X^s_gamma}, dissipation rate)`` at time ``t``."""
    spec = config.norm_spec(t)
    ws = radius_multiplier(w, spec.sigma, p=1)
    return xs_norm_sq(ws, spec), dissipation_sq(ws, spec)


def trajectory_energy(traj: Trajectory, config: SchemeConfig) -> EnergyTrace:
    tr = EnergyTrace()
    for k in range(len(traj)):
        t = k * traj.dt
        nsq, rate = energy_sample(traj.at(k), t, config)
        tr = energy_append(tr, t, nsq, rate)
    return tr


def _zero_outflow(config: SchemeConfig) -> OutflowSchedule:
    return static_outflow(TangentialField.zeros(config.grid))


# -- scheme I -------------------------------------------------------------------------------

def scheme_I_solve(config: SchemeConfig, path: WienerPath, w0: SpectralField,
                   outflow: OutflowSchedule | None = None, *, keep_fields: bool = False,
                   scheme: str = "I") -> tuple[RunRecord, Trajectory | None]:
    """Direct truncated solve with regularizer ``R_n`` (``n=None`` means none).

    Integration stops at ``min(T, T*)``; aborts are recorded, not raised.
    """
    if path.K < config.K:
        raise ValueError("Wiener path has fewer modes than the noise spec")
    outflow = outflow or _zero_outflow(config)
    rec = RunRecord(path.seed, path.path_index, config.config_hash(), scheme)
    mon = StoppingMonitors.for_config(config)
    w = w0.replace(_enforce_dirichlet(w0.coeffs.copy()))
    trace = EnergyTrace()
    fields = [w.coeffs.copy()] if keep_fields else None
    nsteps = min(config.steps, path.steps)
    for k in range(nsteps + 1):
        t = k * config.dt
        nsq, rate = energy_sample(w, t, config)
        trace = energy_append(trace, t, nsq, rate)
        E = trace.energy
        st = outflow(k)
        mon.observe(t, E, st, config)
        chi = cutoff_chi(E, config.physics.cutoff)
        rec.times.append(t)
        rec.norm_sq.append(nsq)
        rec.energy.append(E)
        rec.sigma.append(config.sigma(t))
        rec.gamma.append(config.gamma(t))
        rec.chi_sq.append(chi * chi)
        if k == nsteps or t + config.dt > mon.T_star + 1e-12:
            break
        ctx = StepContext(t, st, path.increments[k], chi * chi)
        try:
            w = linear_spde_step(w, w, ctx, config)
        except PathAbort as exc:
            rec.aborted, rec.abort_time, rec.abort_reason = True, t + config.dt, str(exc)
            break
        if keep_fields:
            fields.append(w.coeffs.copy())
    rec.tau_out, rec.tau_3M, rec.T_star = mon.tau_out, mon.tau_3M, mon.T_star
    traj = Trajectory(config.grid, config.dt, np.array(fields)) if keep_fields else None
    return rec, traj


def direct_truncated_solve(config: SchemeConfig, path: WienerPath, w0: SpectralField,
                           outflow: OutflowSchedule | None = None, **kw):
    """Scheme I without the regularizer."""
    return scheme_I_solve(replace(config, n=None), path, w0, outflow, **kw)


# -- schemes II and III --------------------------------------------------------------------

def _energies_of(traj: Trajectory, config: SchemeConfig) -> np.ndarray:
    return trajectory_energy(traj, config).energies()


def increment_energy(a: Trajectory, b: Trajectory, config: SchemeConfig) -> float:
    """Parabolic energy of ``a - b`` over the whole horizon."""
    diff = Trajectory(a.grid, a.dt, a.coeffs - b.coeffs)
    return trajectory_energy(diff, config).energy


def picard_scheme_II(w_prev: Trajectory, w0: SpectralField, path: WienerPath, config: SchemeConfig,
                     outflow: OutflowSchedule | None = None) -> tuple[Trajectory, float]:
    """One Picard sweep: iterate ``m + 1`` driven by iterate ``m``.

    The cutoff ``chi(E_{w^{m+1}}(t_k))`` uses the running energy of the new
    iterate up to the step start, which is already known when the step is taken.
    """
    outflow = outflow or _zero_outflow(config)
    g = config.grid
    steps = len(w_prev) - 1
    E_prev = _energies_of(w_prev, config)
    cut = config.physics.cutoff
    out = np.empty_like(w_prev.coeffs)
    out[0] = _enforce_dirichlet(w0.coeffs.copy())
    trace = EnergyTrace()
    for k in range(steps):
        t = k * config.dt
        cur = SpectralField(g, out[k])
        nsq, rate = energy_sample(cur, t, config)
        trace = energy_append(trace, t, nsq, rate)
        chi = cutoff_chi(trace.energy, cut) * cutoff_chi(E_prev[k], cut)
        ctx = StepContext(t, outflow(k), path.increments[k], chi)
        out[k + 1] = linear_spde_step(cur, w_prev.at(k), ctx, config).coeffs
    new = Trajectory(g, config.dt, out)
    return new, increment_energy(new, w_prev, config)


def scheme_III_step(w_inner: Trajectory, w_frozen: Trajectory, w0: SpectralField, path: WienerPath,
                    config: SchemeConfig, outflow: OutflowSchedule | None = None) -> Trajectory:
    """Linear equation for ``w^{(m+1)}`` with frozen ``w`` and cutoff input ``w^{(m)}``."""
    outflow = outflow or _zero_outflow(config)
    g = config.grid
    cut = config.physics.cutoff
    E_in = _energies_of(w_inner, config)
    E_fr = _energies_of(w_frozen, config)
    out = np.empty_like(w_inner.coeffs)
    out[0] = _enforce_dirichlet(w0.coeffs.copy())
    for k in range(len(w_inner) - 1):
        chi = cutoff_chi(E_in[k], cut) * cutoff_chi(E_fr[k], cut)
        ctx = StepContext(k * config.dt, outflow(k), path.increments[k], chi)
        out[k + 1] = linear_spde_step(SpectralField(g, out[k]), w_frozen.at(k), ctx, config).coeffs
    return Trajectory(g, config.dt, out)


@dataclass
class PicardResult:
    iterates: list
    increments: list
    converged: bool
    warning: str | None = None

    @property
    def ratios(self) -> list:
        inc = self.increments
        return [inc[m] / inc[m - 1] if inc[m - 1] > 0 else 0.0 for m in range(1, len(inc))]


def picard_iterate(config: SchemeConfig, path: WienerPath, w0: SpectralField,
                   outflow: OutflowSchedule | None = None, *, keep_iterates: bool = False) -> PicardResult:
    """Run scheme II from the heat-flow initial iterate until the increment
    energy drops below ``picard_tol`` or ``m_max`` sweeps are done."""
    cur = heat_trajectory(w0, config.steps, config.dt)
    iterates = [cur] if keep_iterates else []
    incs = []
    for _ in range(config.m_max):
        nxt, inc = picard_scheme_II(cur, w0, path, config, outflow)
        incs.append(inc)
        cur = nxt
        if keep_iterates:
            iterates.append(cur)
        if inc <= config.picard_tol:
            return PicardResult(iterates or [cur], incs, True)
    msg = f"Picard iteration did not reach tol={config.picard_tol} in {config.m_max} sweeps"
    warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return PicardResult(iterates or [cur], incs, False, msg)


# -- diagnostics ----------------------------------------------------------------------------

def reconstruct_solution(w: SpectralField, state: OutflowState, t: float,
                         params: PhysicsParams) -> tuple[SpectralField, SpectralField]:
    """``u = w + psi U`` and ``v = -d_y^{-1}(div_x u)``."""
    psi = params.corrector.profile(t, w.grid.y)
    u = w + state.U.extend(psi)
    v = -antiderivative_y(divergence(u))
    return u, v


def divergence_defect(u: SpectralField, v: SpectralField) -> float:
    """Max of ``|div_x u + d_y v|`` in the cell-averaged form matching the trapezoid rule."""
    div = divergence(u).coeffs[0]
    vv = v.coeffs[0]
    h = np.diff(u.grid.y)
    d = (vv[..., 1:] - vv[..., :-1]) / h + 0.5 * (div[..., 1:] + div[..., :-1])
    return float(np.max(np.abs(d)))


def weak_form_residual(traj: Trajectory, phi: np.ndarray, path: WienerPath, config: SchemeConfig,
                       outflow: OutflowSchedule | None = None) -> float:
    """Residual of the weak form of the truncated equation along a scheme-I trajectory.

    ``phi`` holds real-space test-function samples with the field shape. Drift
    and noise are evaluated at step starts (left points), diffusion through the
    discrete second derivative.
    """
    outflow = outflow or _zero_outflow(config)
    g = traj.grid
    phi_f = SpectralField(g, np.fft.fftn(phi, axes=g.tangential_axes) / g.Nx ** (g.d - 1))

    def pair(c: np.ndarray) -> float:
        return float(g.area * np.sum((np.conj(phi_f.coeffs) * c).real @ g.trapz_weights))

    energies = _energies_of(traj, config)
    cut = config.physics.cutoff
    total = pair(traj.coeffs[-1]) - pair(traj.coeffs[0])
    for k in range(len(traj) - 1):
        t = k * config.dt
        w = traj.at(k)
        st = outflow(k)
        psi = config.physics.corrector.profile(t, g.y)
        chi2 = cutoff_chi(energies[k], cut) ** 2
        us = st.U.extend(psi)
        drift = forcing_term(st, psi).coeffs + normal_derivative(w, 2).coeffs
        if chi2:
            drift = drift - chi2 * convection_bracket(w, us, config.n).coeffs
        total -= config.dt * pair(drift)
        nf = noise_fields(w, st, psi, config.noise, config.n)
        if nf is not None and chi2:
            total -= chi2 * sum(pair(Fi.coeffs) * float(db) for Fi, db in zip(nf, path.increments[k]))
    return abs(total)


def boundary_compatibility_check(w: SpectralField, state: OutflowState, sigma: float = 0.0) -> float:
    """Max over modes of ``|d_y^2 w_sigma(y=0) - (grad_x P)_sigma|``."""
    ws = radius_multiplier(w, sigma, p=1)
    d2 = normal_derivative(ws, 2).coeffs[..., 0]
    gp = radius_multiplier(state.gradP, sigma, p=1).coeffs
    return float(np.max(np.abs(d2 - gp)))


__all__ = [
    "SchemeConfig", "RadiusState", "StoppingMonitors", "RunRecord", "Trajectory", "StepContext",
    "PathAbort", "OutflowSchedule", "static_outflow", "trajectory_outflow",
    "implicit_diffusion", "heat_init", "heat_trajectory", "convection_bracket", "forcing_term",
    "noise_fields", "linear_spde_step", "energy_sample", "trajectory_energy", "scheme_I_solve",
    "direct_truncated_solve", "increment_energy", "picard_scheme_II", "scheme_III_step",
    "PicardResult", "picard_iterate", "reconstruct_solution", "divergence_defect",
    "weak_form_residual", "boundary_compatibility_check",
]
