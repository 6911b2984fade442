"""
Truncated cylindrical Wiener noise, the multiplicative force, Ito sums, the
geometric Ornstein-Uhlenbeck multiplier and the outflow (Bernoulli) stepper.

Per-mode coefficient fields are stored as real-space samples with a leading
Wiener-mode axis, e.g. ``a0.shape == (K, ncomp, Nx, Ny)`` in d=2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import (
    Grid,
    SpectralField,
    TangentialField,
    dealias,
    fourier_power,
    from_spectral,
    radius_multiplier,
    tangential_derivative,
    tangential_to_spectral,
    to_spectral,
    component,
    product,
)
from .norms import hx_norm
from .physics import CutoffParams, OutflowState, cutoff_chi


# -- random numbers -------------------------------------------------------------

def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Increments of ``K`` independent Brownian motions on a uniform time grid."""

    seed: int
    path_index: int
    dt: float
    increments: np.ndarray  # (steps, K)

    @property
    def steps(self) -> int:
        return self.increments.shape[0]

    @property
    def K(self) -> int:
        return self.increments.shape[1]

    def brownian(self, mode: int = 0) -> np.ndarray:
        """Partial sums ``B(t_0 = 0), B(t_1), ...`` for one mode."""
        return np.concatenate([[0.0], np.cumsum(self.increments[:, mode])])

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    def coarsen(self, factor: int) -> "WienerPath":
        """Sum consecutive blocks of increments (same Brownian path, larger step)."""
        n = self.steps // factor
        inc = self.increments[: n * factor].reshape(n, factor, self.K).sum(axis=1)
        return WienerPath(self.seed, self.path_index, self.dt * factor, inc)

    def save(self, path) -> None:
        header = np.array([self.seed, self.path_index, self.dt, self.steps, self.K], dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(header.tobytes())
            fh.write(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "WienerPath":
        raw = np.fromfile(path, dtype="<f8")
        seed, idx, dt, steps, K = raw[:5]
        inc = raw[5:].reshape(int(steps), int(K))
        return cls(int(seed), int(idx), float(dt), inc.copy())


def sample_increments(seed: int, steps: int, K: int, dt: float, path: int = 0) -> WienerPath:
    """Gaussian increments ``N(0, dt)``, reproducible from ``(seed, path)``.

    Draws are consumed in (step, mode) order from the path's own stream, so the
    value for a given (seed, path, step, mode) never depends on other paths.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if steps < 0 or not dt > 0:
        raise ValueError("steps must be >= 0 and dt > 0")
    z = make_rng(seed, path).standard_normal((steps, K))
    return WienerPath(seed, path, dt, z * math.sqrt(dt))


# -- noise specification ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SeriesTerm:
    """``a_n u^n`` with ``a_n = a0 (x, y) + abar (x)``, one slice per Wiener mode."""

    n: int | tuple[int, ...]
    a0: np.ndarray
    abar: np.ndarray

    @property
    def order(self) -> int:
        return int(self.n) if np.isscalar(self.n) else int(sum(self.n))


@dataclass(frozen=True, eq=False)
class LinearNoise:
    """``G |grad_x|^a u`` with ``G = G0 (x, y) + Gbar (x)``."""

    G0: np.ndarray
    Gbar: np.ndarray
    a: float = 0.0


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Force ``F(u) = sum_n a_n u^n + G |grad_x|^a u`` projected on ``K`` modes.

    ``rho`` and ``decay_bound`` define the finite-radius decay check
    ``sum_n (|a0_n| + |abar_n|) rho^|n| <= decay_bound`` (sup norms summed over modes).
    """

    grid: Grid
    K: int = 8
    terms: tuple[SeriesTerm, ...] = ()
    linear: LinearNoise | None = None
    rho: float = 1.0
    decay_bound: float = math.inf

    def __post_init__(self) -> None:
        g = self.grid
        if self.K < 1:
            raise ValueError("K must be >= 1")
        full = (self.K, *g.shape)
        tang = (self.K, *g.tangential_shape)
        terms = []
        for t in self.terms:
            n = t.n
            if np.isscalar(n):
                if g.d != 2 or int(n) < 1:
                    raise ValueError(f"invalid series index {n!r}")
            else:
                n = tuple(int(v) for v in n)
                if len(n) != g.ncomp or min(n) < 0 or sum(n) == 0:
                    raise ValueError(f"invalid series index {n!r}")
            terms.append(SeriesTerm(n, _broadcast(t.a0, full), _broadcast(t.abar, tang)))
        object.__setattr__(self, "terms", tuple(terms))
        if self.linear is not None:
            a = float(self.linear.a)
            if not 0.0 <= a <= 0.5:
                raise ValueError(f"linear exponent a must lie in [0, 1/2], got {a}")
            lin = LinearNoise(_broadcast(self.linear.G0, full),
                              _broadcast(self.linear.Gbar, tang), a)
            object.__setattr__(self, "linear", lin)

    # constructors
    @classmethod
    def zero(cls, grid: Grid, K: int = 8) -> "NoiseSpec":
        return cls(grid, K)

    @classmethod
    def linear_only(cls, grid: Grid, K: int, G0=0.0, Gbar=0.0, a: float = 0.0) -> "NoiseSpec":
        return cls(grid, K, (), LinearNoise(G0, Gbar, a))

    def mode_profile(self) -> np.ndarray:
        """Sup norm of each mode's coefficients; a decaying profile signals small truncation error."""
        prof = np.zeros(self.K)
        for t in self.terms:
            prof += np.abs(t.a0).reshape(self.K, -1).max(axis=1)
            prof += np.abs(t.abar).reshape(self.K, -1).max(axis=1)
        if self.linear is not None:
            prof += np.abs(self.linear.G0).reshape(self.K, -1).max(axis=1)
            prof += np.abs(self.linear.Gbar).reshape(self.K, -1).max(axis=1)
        return prof

    def decay_sum(self, rho: float | None = None) -> float:
        r = self.rho if rho is None else rho
        total = 0.0
        for t in self.terms:
            c = float(np.abs(t.a0).reshape(self.K, -1).max(axis=1).sum()
                      + np.abs(t.abar).reshape(self.K, -1).max(axis=1).sum())
            total += c * r ** t.order
        return total

    def check_decay(self) -> None:
        s = self.decay_sum()
        if not np.isfinite(s) or s > self.decay_bound:
            raise ValueError(f"decay check failed at rho={self.rho}: sum={s} > {self.decay_bound}")

    def is_zero(self) -> bool:
        return not self.terms and (self.linear is None or (
            not np.any(self.linear.G0) and not np.any(self.linear.Gbar)))


def _broadcast(arr, shape) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    try:
        return np.array(np.broadcast_to(a, shape), dtype=float)
    except ValueError as exc:
        raise ValueError(f"coefficient shape {a.shape} does not broadcast to {shape}") from exc


def _power(uv: np.ndarray, n) -> np.ndarray:
    """``u^n`` in real space; multi-index powers give a scalar replicated per component."""
    if np.isscalar(n):
        return uv ** int(n)
    out = np.ones_like(uv[0])
    for a, p in enumerate(n):
        if p:
            out = out * uv[a] ** p
    return np.broadcast_to(out, uv.shape)


def _to_field(vals: np.ndarray, like) -> SpectralField | TangentialField:
    g = like.grid
    if isinstance(like, SpectralField):
        return dealias(to_spectral(vals, g))
    return dealias(tangential_to_spectral(vals, g))


def evaluate_F(u: SpectralField, spec: NoiseSpec) -> list[SpectralField]:
    """Per-mode force ``F_i(u)`` for ``i < K``."""
    spec.check_decay()
    uv = from_spectral(dealias(u))
    out = [np.zeros(u.grid.shape) for _ in range(spec.K)]
    for t in spec.terms:
        un = _power(uv, t.n)
        for i in range(spec.K):
            out[i] = out[i] + (t.a0[i] + t.abar[i][..., None]) * un
    if spec.linear is not None:
        lin = spec.linear
        fu = from_spectral(fourier_power(dealias(u), lin.a))
        for i in range(spec.K):
            out[i] = out[i] + (lin.G0[i] + lin.Gbar[i][..., None]) * fu
    return [_to_field(v, u) for v in out]


def evaluate_F_limit(U: TangentialField, spec: NoiseSpec) -> list[TangentialField]:
    """Far-field force: only ``abar`` and ``Gbar`` contribute."""
    spec.check_decay()
    uv = from_spectral(dealias(U))
    out = [np.zeros(U.grid.tangential_shape) for _ in range(spec.K)]
    for t in spec.terms:
        un = _power(uv, t.n)
        for i in range(spec.K):
            out[i] = out[i] + t.abar[i] * un
    if spec.linear is not None:
        lin = spec.linear
        fu = from_spectral(fourier_power(dealias(U), lin.a))
        for i in range(spec.K):
            out[i] = out[i] + lin.Gbar[i] * fu
    return [_to_field(v, U) for v in out]


def homogenized_noise(w: SpectralField, us: SpectralField, U: TangentialField,
                      psi_row: np.ndarray, spec: NoiseSpec) -> list[SpectralField]:
    """``F(w + u^s) - psi Fbar(U)`` per mode (the cutoff is applied by the caller)."""
    F = evaluate_F(w + us, spec)
    Fbar = evaluate_F_limit(U, spec)
    return [Fi - Fb.extend(psi_row) for Fi, Fb in zip(F, Fbar)]


def hilbert_schmidt_sq(fields_per_mode: Sequence[SpectralField]) -> float:
    """``sum_i ||F_i||_{L^2}^2`` via Parseval."""
    total = 0.0
    for f in fields_per_mode:
        g = f.grid
        total += g.area * float(np.sum(np.sum(np.abs(f.coeffs) ** 2, axis=tuple(range(f.coeffs.ndim - 1)))
                                       * g.trapz_weights))
    return total


def ito_increment(fields_per_mode: Sequence, path: WienerPath, step: int):
    """``sum_i F_i dB_i`` with ``dB`` of the given step."""
    dB = path.increments[step]
    if len(fields_per_mode) > len(dB):
        raise ValueError("more integrand modes than Wiener modes")
    out = None
    for Fi, db in zip(fields_per_mode, dB):
        term = Fi * float(db)
        out = term if out is None else out + term
    return out


@dataclass(frozen=True)
class IsometryResult:
    lhs: float
    rhs: float
    se: float
    z: float
    cross_mean: float
    cross_se: float
    n_paths: int

    @property
    def rel_error(self) -> float:
        return abs(self.lhs - self.rhs) / self.rhs if self.rhs else abs(self.lhs)


def ito_isometry_check(schedule: np.ndarray, dt: float, n_paths: int, seed: int = 0) -> IsometryResult:
    """Monte Carlo check of ``E|sum F dB|^2 = sum |F|^2 dt``.

    ``schedule`` has shape ``(steps, K)``: a deterministic scalar integrand per
    step and mode. ``cross_mean`` estimates ``E[I_0 I_1]`` for the first two
    modes (zero for independent modes); it is NaN when ``K == 1``.
    """
    sched = np.asarray(schedule, dtype=float)
    steps, K = sched.shape
    I = np.empty((n_paths, K))
    for p in range(n_paths):
        inc = sample_increments(seed, steps, K, dt, path=p).increments
        I[p] = np.sum(sched * inc, axis=0)
    sq = np.sum(I**2, axis=1)
    lhs = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(n_paths))
    rhs = float(np.sum(sched**2) * dt)
    if K >= 2:
        cross = I[:, 0] * I[:, 1]
        cm, cse = float(cross.mean()), float(cross.std(ddof=1) / math.sqrt(n_paths))
    else:
        cm = cse = float("nan")
    return IsometryResult(lhs, rhs, se, (lhs - rhs) / se if se else 0.0, cm, cse, n_paths)


# -- geometric OU multiplier ----------------------------------------------------

@dataclass(frozen=True)
class OUState:
    """``dU = beta U dt + alpha1 U dB`` with ``U(0) = U0``."""

    value: float
    t: float = 0.0
    beta: float = 1.0
    alpha1: float = 1.0
    U0: float = 1.0

    def __post_init__(self) -> None:
        if not self.U0 > 0:
            raise ValueError("U0 must be positive")

    @classmethod
    def initial(cls, beta: float, alpha1: float, U0: float) -> "OUState":
        return cls(U0, 0.0, beta, alpha1, U0)


def ou_exact(state: OUState, B_t, t=None):
    """``U0 exp(alpha1 B_t + (beta - alpha1^2 / 2) t)``; ``t`` defaults to ``state.t``."""
    tt = state.t if t is None else t
    return state.U0 * np.exp(state.alpha1 * np.asarray(B_t) + (state.beta - 0.5 * state.alpha1**2) * np.asarray(tt))


def ou_em_step(state: OUState, dB: float, dt: float) -> OUState:
    """One Euler-Maruyama step."""
    v = state.value * (1.0 + state.beta * dt + state.alpha1 * dB)
    return OUState(v, state.t + dt, state.beta, state.alpha1, state.U0)


def ou_strong_errors(beta: float, alpha1: float, U0: float, T: float, dts: Sequence[float],
                     n_paths: int, seed: int = 0) -> np.ndarray:
    """Mean ``|U_EM(T) - U_exact(T)|`` for each step size on shared Brownian paths.

    Every ``dt`` must divide the finest step's grid (the finest is ``min(dts)``).
    """
    fine = min(dts)
    nf = int(round(T / fine))
    errs = np.zeros(len(dts))
    for p in range(n_paths):
        base = sample_increments(seed, nf, 1, fine, path=p)
        B_T = float(base.increments.sum())
        exact = U0 * math.exp(alpha1 * B_T + (beta - 0.5 * alpha1**2) * T)
        for i, dt in enumerate(dts):
            path = base.coarsen(int(round(dt / fine)))
            v = U0
            for db in path.increments[:, 0]:
                v *= 1.0 + beta * path.dt + alpha1 * db
            errs[i] += abs(v - exact)
    return errs / n_paths


# -- outflow stepper -----------------------------------------------------------------

GradPSchedule = Callable[[float, TangentialField], TangentialField]


@dataclass(frozen=True, eq=False)
class BernoulliConfig:
    """Truncated outflow law parameters.

    ``grad_p`` maps ``(t, U)`` to the pressure gradient. The cutoff acts on
    ``||U_sigma||_{H^s_x}`` with ``sigma(t) = sigma0 - lam t``.
    """

    noise: NoiseSpec
    grad_p: GradPSchedule
    dt: float = 1e-3
    s: int = 4
    sigma0: float = 0.1
    lam: float = 0.0
    cutoff: CutoffParams = CutoffParams(M=1e6)


def bernoulli_step(state: OutflowState, path: WienerPath, step: int, config: BernoulliConfig) -> OutflowState:
    """Euler-Maruyama step of the truncated outflow law.

    Large norms switch drift and noise off through the cutoff, never raising.
    """
    U = state.U
    t = state.t
    sigma = max(config.sigma0 - config.lam * t, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            nrm = hx_norm(radius_multiplier(U, sigma, p=1), config.s, 0.0)
        except (OverflowError, ValueError):
            nrm = math.inf
    chi = cutoff_chi(nrm if np.isfinite(nrm) else math.inf, config.cutoff)
    gp = config.grad_p(t, U)
    if chi == 0.0:
        return OutflowState(U, gp, t + config.dt)
    conv = None
    for a in range(U.grid.ncomp):
        term = product(component(U, a), tangential_derivative(U, 1, axis=a))
        conv = term if conv is None else conv + term
    drift = (conv + gp) * (-(chi * chi) * config.dt)
    Fbar = evaluate_F_limit(U, config.noise)
    noise = ito_increment(Fbar, path, step)
    Unew = U + drift + noise * (chi * chi)
    return OutflowState(Unew, config.grad_p(t + config.dt, Unew), t + config.dt)


def run_bernoulli(U0: TangentialField, path: WienerPath, config: BernoulliConfig) -> list[OutflowState]:
    state = OutflowState(U0, config.grad_p(0.0, U0), 0.0)
    out = [state]
    for k in range(path.steps):
        state = bernoulli_step(state, path, k, config)
        out.append(state)
    return out


__all__ = [
    "make_rng", "WienerPath", "sample_increments", "SeriesTerm", "LinearNoise", "NoiseSpec",
    "evaluate_F", "evaluate_F_limit", "homogenized_noise", "hilbert_schmidt_sq",
    "ito_increment", "IsometryResult", "ito_isometry_check", "OUState", "ou_exact",
    "ou_em_step", "ou_strong_errors", "BernoulliConfig", "bernoulli_step", "run_bernoulli",
]
