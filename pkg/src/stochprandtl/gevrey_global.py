"""
Regularization by a random multiplier: parameters, the transformed equation in
Gevrey variables, Brownian barrier statistics and ensemble survival reports.

With ``U(t) = U0 exp(alpha1 B + (beta - alpha1^2/2) t)`` and
``sigma(t) = sigma0 + lam t - alpha2 B``, the transformed unknown is
``w_G = U^{-1} exp(sigma(t) |grad_x|^(1/2)) w`` and satisfies

    d_t w_G = d_y^2 w_G - [beta + (alpha1 alpha2 - lam)|k|^(1/2) + (alpha2^2/2)|k|] w_G
              - U Psi d_x w_G + U Psi' d_y^{-1} d_x w_G - Q_G(w_G)

where ``Q_G`` is the transformed quadratic convection. ``Q_G`` is evaluated as
a direct convolution with the kernel ``exp(sigma (|k|^(1/2) - |j|^(1/2) -
|k-j|^(1/2))) <= 1``, which never amplifies rounding errors.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import norm as _gauss

from .fields import Grid, SpectralField, antiderivative_y, normal_derivative, radius_multiplier
from .noise import make_rng
from .norms import NormSpec, xs_norm_sq
from .physics import shear_Psi


# -- parameters ---------------------------------------------------------------------

@dataclass(frozen=True)
class GlobalParams:
    """Parameters of the global experiment, after the recipe."""

    eps: float
    lam: float
    U0: float
    gamma: float
    s: int
    R: float
    beta: float
    alpha1: float
    alpha2: float
    sigma0: float
    delta_data: float

    def __post_init__(self) -> None:
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.lam >= 0 or not self.U0 > 0:
            raise ValueError("lam must be nonnegative and U0 positive")
        if self.alpha2 < 0 or not self.alpha1 > 0 or not self.beta > 0:
            raise ValueError("need alpha1, beta > 0 and alpha2 >= 0")

    def first_barrier(self) -> tuple[float, float]:
        """``(a, b)`` with the first barrier ``B >= a + b t``."""
        drift = 0.5 * self.alpha1**2 - self.beta
        return self.R / self.alpha1, drift / self.alpha1

    def second_barrier(self) -> tuple[float, float]:
        if self.alpha2 == 0:
            return math.inf, 0.0
        return self.sigma0 / (2.0 * self.alpha2), self.lam / (2.0 * self.alpha2)

    def bound_terms(self) -> tuple[float, float]:
        """The two closed-form exponentials of the survival bound."""
        t1 = math.exp(-self.R * (1.0 - 2.0 * self.beta / self.alpha1**2))
        t2 = 0.0 if self.alpha2 == 0 else math.exp(-self.lam * self.sigma0 / (2.0 * self.alpha2**2))
        return t1, t2

    def survival_bound(self) -> float:
        t1, t2 = self.bound_terms()
        return 1.0 - t1 - t2

    def sigma_at(self, t, B):
        return self.sigma0 + self.lam * np.asarray(t) - self.alpha2 * np.asarray(B)

    def U_at(self, t, B):
        return self.U0 * np.exp(self.alpha1 * np.asarray(B) + (self.beta - 0.5 * self.alpha1**2) * np.asarray(t))

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_recipe(eps: float, lam: float, U0: float, gamma: float, s: int, *,
                     beta: float = 64.0, alpha2: float = 1.0, delta_data: float = 1e-4) -> GlobalParams:
    """Deterministic parameter choice.

    ``R = -2 log(eps/2)``, ``alpha1 = 2 sqrt(beta)`` (so ``alpha1^2 = 4 beta``),
    ``alpha2`` is raised if needed so that ``alpha1 alpha2 > lam``, and
    ``sigma0 = (2 alpha2^2 / lam) log(2 / eps)``. ``beta`` and ``alpha2`` stand in
    for constants that are only known to exist; see :func:`calibrate`.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not beta > 0 or not alpha2 > 0:
        raise ValueError("beta and alpha2 must be positive")
    R = -2.0 * math.log(eps / 2.0)
    alpha1 = 2.0 * math.sqrt(beta)
    if alpha1 * alpha2 <= lam:
        alpha2 = 1.25 * lam / alpha1
    sigma0 = (2.0 * alpha2**2 / lam) * math.log(2.0 / eps)
    return GlobalParams(eps, lam, U0, gamma, s, R, beta, alpha1, alpha2, sigma0, delta_data)


# -- barrier probabilities -------------------------------------------------------------

def hitting_prob_infinite(a: float, b: float) -> float:
    """``P(sup_t (B_t - b t) >= a) = exp(-2 a b)`` for ``a, b > 0``."""
    if math.isinf(a):
        return 0.0
    return math.exp(-2.0 * a * b)


def hitting_prob_finite(a: float, b: float, T: float) -> float:
    """``P(B_t >= a + b t`` for some ``t <= T)``."""
    if math.isinf(a):
        return 0.0
    sT = math.sqrt(T)
    return float(_gauss.cdf((-a - b * T) / sT) + math.exp(-2 * a * b) * _gauss.cdf((-a + b * T) / sT))


def post_horizon_tail(a: float, b: float, T: float) -> float:
    """Probability of a first hit after ``T``."""
    return max(hitting_prob_infinite(a, b) - hitting_prob_finite(a, b, T), 0.0)


def horizon_for_tail(params: GlobalParams, tol: float = 1e-4, dt: float = 1e-3) -> float:
    """Smallest multiple of ``dt`` whose combined post-horizon tail is below ``tol``."""
    a1, b1 = params.first_barrier()
    a2, b2 = params.second_barrier()
    T = dt
    while post_horizon_tail(a1, b1, T) + post_horizon_tail(a2, b2, T) >= tol:
        T *= 1.25
    return dt * math.ceil(T / dt)


def _bridge_cross(d0: np.ndarray, d1: np.ndarray, dt: float) -> np.ndarray:
    """Crossing probability of a Brownian bridge over a linear barrier.

    ``d0``, ``d1`` are barrier-minus-path distances at the step ends.
    """
    out = np.exp(-2.0 * np.clip(d0, 0, None) * np.clip(d1, 0, None) / dt)
    return np.where((d0 <= 0) | (d1 <= 0), 1.0, out)


@dataclass(frozen=True)
class HittingResult:
    survival: float
    survival_se: float
    bound: float
    second_freq: float
    second_se: float
    second_closed: float
    second_closed_finite: float
    first_freq: float
    first_se: float
    first_closed: float
    T: float
    dt: float
    n_paths: int
    tail_bound: float

    @property
    def passes(self) -> bool:
        return self.survival >= self.bound - 3 * self.survival_se

    @property
    def second_z(self) -> float:
        return (self.second_freq - self.second_closed) / self.second_se if self.second_se else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passes"] = self.passes
        d["second_z"] = self.second_z
        return d


def _hitting_block(params: GlobalParams, seed: int, block: int, n: int, steps: int, dt: float):
    a1, b1 = params.first_barrier()
    a2, b2 = params.second_barrier()
    rng = make_rng(seed, block)
    s1 = np.ones(n)
    s2 = np.ones(n)
    B = np.zeros(n)
    sq = math.sqrt(dt)
    chunk = 256
    for k0 in range(0, steps, chunk):
        m = min(chunk, steps - k0)
        inc = rng.standard_normal((m, n)) * sq
        path = B + np.cumsum(inc, axis=0)
        prev = np.vstack([B[None], path[:-1]])
        t0 = dt * np.arange(k0, k0 + m)[:, None]
        t1 = t0 + dt
        p1 = _bridge_cross(a1 + b1 * t0 - prev, a1 + b1 * t1 - path, dt)
        p2 = _bridge_cross(a2 + b2 * t0 - prev, a2 + b2 * t1 - path, dt)
        s1 *= np.prod(1.0 - p1, axis=0)
        s2 *= np.prod(1.0 - p2, axis=0)
        B = path[-1]
    return s1, s2


def hitting_prob_mc(params: GlobalParams, n_paths: int = 100_000, dt: float = 1e-3,
                    T: float | None = None, seed: int = 0, threads: int = 1,
                    block_size: int = 4096, tail_tol: float = 1e-4) -> HittingResult:
    """Monte Carlo probability of avoiding both barriers up to ``T``.

    Each path contributes its exact conditional non-crossing probability
    given the sampled grid values (Brownian-bridge correction per step). The
    two barriers are combined as if crossing were independent within a step,
    which can only lower the survival estimate. Blocks of paths are keyed by
    ``(seed, block)`` so results do not depend on ``threads``.
    """
    T = horizon_for_tail(params, tail_tol, dt) if T is None else T
    steps = int(round(T / dt))
    nblocks = math.ceil(n_paths / block_size)
    sizes = [min(block_size, n_paths - b * block_size) for b in range(nblocks)]

    def run(b):
        return _hitting_block(params, seed, b, sizes[b], steps, dt)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(nblocks)))
    else:
        parts = [run(b) for b in range(nblocks)]
    s1 = np.concatenate([p[0] for p in parts])
    s2 = np.concatenate([p[1] for p in parts])
    surv = s1 * s2
    hit2 = 1.0 - s2
    hit1 = 1.0 - s1
    n = n_paths
    a1, b1 = params.first_barrier()
    a2, b2 = params.second_barrier()
    tail = post_horizon_tail(a1, b1, T) + post_horizon_tail(a2, b2, T)
    return HittingResult(
        survival=float(surv.mean()), survival_se=float(surv.std(ddof=1) / math.sqrt(n)),
        bound=params.survival_bound(),
        second_freq=float(hit2.mean()), second_se=float(hit2.std(ddof=1) / math.sqrt(n)),
        second_closed=hitting_prob_infinite(a2, b2),
        second_closed_finite=hitting_prob_finite(a2, b2, T),
        first_freq=float(hit1.mean()), first_se=float(hit1.std(ddof=1) / math.sqrt(n)),
        first_closed=hitting_prob_infinite(a1, b1), T=T, dt=dt, n_paths=n, tail_bound=tail)


def radius_path(B: np.ndarray, times: np.ndarray, params: GlobalParams) -> np.ndarray:
    """``sigma(t) = sigma0 + lam t - alpha2 B_t`` at the sample points."""
    return params.sigma_at(times, B)


@dataclass(frozen=True)
class BarrierStats:
    first_hit: float | None
    second_hit: float | None
    min_margin: float

    @property
    def T_star(self) -> float | None:
        hits = [h for h in (self.first_hit, self.second_hit) if h is not None]
        return min(hits) if hits else None


def barrier_monitor(B: np.ndarray, times: np.ndarray, params: GlobalParams) -> BarrierStats:
    """Grid-point barrier check and ``min_t sigma(t) - (sigma0 + lam t)/2``."""
    B = np.asarray(B)
    a1, b1 = params.first_barrier()
    a2, b2 = params.second_barrier()
    h1 = np.nonzero(B >= a1 + b1 * times)[0]
    h2 = np.nonzero(B >= a2 + b2 * times)[0]
    margin = radius_path(B, times, params) - 0.5 * (params.sigma0 + params.lam * times)
    return BarrierStats(float(times[h1[0]]) if h1.size else None,
                        float(times[h2[0]]) if h2.size else None, float(margin.min()))


# -- transformed equation ----------------------------------------------------------------

def gamma_transform(w: SpectralField, U: float, B: float, t: float, params: GlobalParams,
                    direction: str = "forward") -> SpectralField:
    """``U^{-1} exp(sigma(t)|grad_x|^(1/2)) w`` or its inverse."""
    sig = float(params.sigma_at(t, B))
    if direction == "forward":
        return radius_multiplier(w, sig, p=2) * (1.0 / U)
    if direction == "inverse":
        return radius_multiplier(w, -sig, p=2) * U
    raise ValueError("direction must be 'forward' or 'inverse'")


@dataclass(frozen=True)
class GevreyConvolution:
    """Kernel-weighted convolution on the dealiased band (d=2 only)."""

    grid: Grid

    @cached_property
    def _tables(self):
        g = self.grid
        if g.d != 2:
            raise ValueError("the global experiment is implemented for d=2")
        n = g.mode_index
        band = np.abs(n) < g.Nx / 3.0
        idx = np.nonzero(band)[0]
        K, J = np.meshgrid(idx, idx, indexing="ij")
        diff = n[K] - n[J]
        valid = np.abs(diff) < g.Nx / 3.0
        diff_idx = np.mod(diff, g.Nx)
        scale = 2 * math.pi / g.Lx
        root = np.sqrt(np.abs(n) * scale)
        expo = root[K] - root[J] - np.sqrt(np.abs(diff) * scale)
        return idx, J, diff_idx, valid, expo

    def __call__(self, a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
        """``sum_j exp(sigma e(k, j)) a_j b_{k-j}`` for arrays of shape ``(Nx, Ny)``."""
        idx, J, D, valid, expo = self._tables
        ker = np.where(valid, np.exp(sigma * expo), 0.0)
        out = np.zeros_like(a, dtype=complex)
        out[idx] = np.einsum("kj,kjy,kjy->ky", ker, a[J], b[D])
        return out


@dataclass(frozen=True, eq=False)
class GlobalRunConfig:
    """Numerical settings for the transformed-equation runs."""

    grid: Grid = Grid(Nx=16, Ny=64, Ly=8.0, conormal_order=12)
    dt: float = 2e-3
    T: float = 1.0
    n_paths: int = 80
    min_survivors: int = 64
    energy_slack: float = 1e-8

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "dt": self.dt, "T": self.T, "n_paths": self.n_paths,
                "min_survivors": self.min_survivors, "energy_slack": self.energy_slack}


def diagonal_rate(grid: Grid, params: GlobalParams) -> np.ndarray:
    """Per-mode damping ``beta + (alpha1 alpha2 - lam)|k|^(1/2) + (alpha2^2/2)|k|``."""
    k = grid.kmag
    return params.beta + (params.alpha1 * params.alpha2 - params.lam) * np.sqrt(k) + 0.5 * params.alpha2**2 * k


@dataclass(frozen=True, eq=False)
class TransformedDrift:
    explicit: SpectralField
    diagonal: SpectralField
    diffusion: SpectralField

    def total(self) -> SpectralField:
        return self.explicit + self.diagonal + self.diffusion


def transformed_rhs(wG: SpectralField, U: float, B: float, t: float, params: GlobalParams,
                    *, quadratic: bool = True) -> TransformedDrift:
    """Drift of the transformed equation split into explicit, diagonal and diffusion parts."""
    g = wG.grid
    c = wG.coeffs[0]
    sig = float(params.sigma_at(t, B))
    ik = 1j * g.k1_deriv[:, None]
    dx = ik * c
    vert = antiderivative_y(SpectralField(g, dx[None])).coeffs[0]
    Psi = shear_Psi(g.y, params.beta)
    dPsi = math.sqrt(params.beta) * np.exp(-math.sqrt(params.beta) * g.y)
    expl = -U * Psi * dx + U * dPsi * vert
    if quadratic:
        conv = GevreyConvolution(g)
        dy = normal_derivative(wG, 1).coeffs[0]
        expl = expl - U * (conv(c, dx, sig) - conv(vert, dy, sig))
    diag = -diagonal_rate(g, params)[:, None] * c
    return TransformedDrift(wG.replace(expl[None]), wG.replace(diag[None]),
                            normal_derivative(wG, 2))


def _implicit_solve(rhs: np.ndarray, grid: Grid, dt: float, rate: np.ndarray) -> np.ndarray:
    D = grid.diff_matrix(2, 2)
    out = np.zeros_like(rhs)
    base = -dt * D
    for m in range(grid.Nx):
        A = base + np.eye(grid.Ny) * (1.0 + dt * rate[m])
        A[0, :] = 0.0
        A[0, 0] = 1.0
        A[-1, :] = 0.0
        A[-1, -1] = 1.0
        ab = np.zeros((3, grid.Ny))
        ab[0, 1:] = np.diag(A, 1)
        ab[1] = np.diag(A)
        ab[2, :-1] = np.diag(A, -1)
        b = rhs[m].copy()
        b[0] = b[-1] = 0.0
        out[m] = solve_banded((1, 1), ab, b.real) + 1j * solve_banded((1, 1), ab, b.imag)
    return out


@dataclass
class PathStats:
    path_index: int
    first_hit: float | None = None
    second_hit: float | None = None
    T_star: float | None = None
    T_2delta: float | None = None
    min_margin: float = math.inf
    survived: bool = True
    aborted: bool = False
    abort_reason: str | None = None
    energy: list = field(default_factory=list)
    times: list = field(default_factory=list)
    max_rel_increase: float = 0.0
    monotone: bool = True

    def to_dict(self, series: bool = True) -> dict:
        d = asdict(self)
        if not series:
            d.pop("energy")
            d.pop("times")
        return d


def initial_perturbation(grid: Grid, params: GlobalParams, seed: int, path: int,
                         norm_spec: NormSpec | None = None) -> SpectralField:
    """Smooth perturbation scaled so that ``||w0||_{X^s_{gamma, sigma0, 2}} = delta_data``."""
    from .harness.corpus import random_field  # local import keeps module layering flat

    spec = norm_spec or NormSpec(params.s, params.gamma, params.sigma0, "polynomial", 2)
    w0 = random_field(grid, make_rng(seed, path, 17), kmax=3, amplitude=1.0, radius=1.0)
    nrm = math.sqrt(xs_norm_sq(radius_multiplier(w0, params.sigma0, p=2), spec))
    return w0 * (params.delta_data / nrm)


def global_run(params: GlobalParams, cfg: GlobalRunConfig, seed: int, path: int,
               w0: SpectralField | None = None) -> PathStats:
    """Integrate the transformed equation on one path up to the first stop."""
    g = cfg.grid
    spec = NormSpec(params.s, params.gamma, 0.0, "polynomial", 2)
    if w0 is None:
        w0 = initial_perturbation(g, params, seed, path)
    steps = int(round(cfg.T / cfg.dt))
    rng_B = make_rng(seed, path, 0)
    rng_u = make_rng(seed, path, 1)
    dB = rng_B.standard_normal(steps) * math.sqrt(cfg.dt)
    uni = rng_u.random(steps)
    B = np.concatenate([[0.0], np.cumsum(dB)])
    times = cfg.dt * np.arange(steps + 1)
    a1, b1 = params.first_barrier()
    a2, b2 = params.second_barrier()
    rate = diagonal_rate(g, params)
    st = PathStats(path)
    wG = gamma_transform(w0, params.U0, 0.0, 0.0, params, "forward")
    c = wG.coeffs.copy()
    c[..., 0] = c[..., -1] = 0.0
    threshold_sq = (2.0 * params.delta_data / params.U0) ** 2
    e_prev = xs_norm_sq(SpectralField(g, c), spec)
    st.energy.append(e_prev)
    st.times.append(0.0)
    margins = radius_path(B, times, params) - 0.5 * (params.sigma0 + params.lam * times)
    for k in range(steps):
        t = times[k]
        st.min_margin = min(st.min_margin, float(margins[k]))
        U = float(params.U_at(t, B[k]))
        drift = transformed_rhs(SpectralField(g, c), U, B[k], t, params)
        rhs = c[0] + cfg.dt * drift.explicit.coeffs[0]
        c = _implicit_solve(rhs, g, cfg.dt, rate)[None]
        if not np.all(np.isfinite(c)):
            st.aborted, st.abort_reason = True, f"non-finite field at t={t + cfg.dt:.6g}"
            break
        e = xs_norm_sq(SpectralField(g, c), spec)
        st.energy.append(e)
        st.times.append(float(times[k + 1]))
        if e_prev > 0:
            inc = (e - e_prev) / e_prev
            st.max_rel_increase = max(st.max_rel_increase, inc)
            if inc > cfg.energy_slack:
                st.monotone = False
        e_prev = e
        if e >= threshold_sq:
            st.T_2delta = float(times[k + 1])
            break
        p1 = _bridge_cross(np.array(a1 + b1 * t - B[k]), np.array(a1 + b1 * (t + cfg.dt) - B[k + 1]), cfg.dt)
        p2 = _bridge_cross(np.array(a2 + b2 * t - B[k]), np.array(a2 + b2 * (t + cfg.dt) - B[k + 1]), cfg.dt)
        p = 1.0 - (1.0 - float(p1)) * (1.0 - float(p2))
        if uni[k] < p:
            which_first = float(p1) >= float(p2)
            if which_first:
                st.first_hit = float(times[k + 1])
            else:
                st.second_hit = float(times[k + 1])
            st.T_star = float(times[k + 1])
            st.survived = False
            break
    else:
        st.min_margin = min(st.min_margin, float(margins[-1]))
    return st


def sigma_fan(params: GlobalParams, cfg: GlobalRunConfig, seed: int, n_paths: int,
              quantiles=(0.05, 0.25, 0.5, 0.75, 0.95)) -> tuple[np.ndarray, np.ndarray]:
    """Quantiles of ``sigma(t)`` across paths, using the same Brownian streams as :func:`global_run`."""
    steps = int(round(cfg.T / cfg.dt))
    times = cfg.dt * np.arange(steps + 1)
    sig = np.empty((n_paths, steps + 1))
    for p in range(n_paths):
        dB = make_rng(seed, p, 0).standard_normal(steps) * math.sqrt(cfg.dt)
        sig[p] = radius_path(np.concatenate([[0.0], np.cumsum(dB)]), times, params)
    return times, np.quantile(sig, quantiles, axis=0)


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    p = successes / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # clamp so the interval always contains p despite rounding
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def survival_stats(records: list[PathStats], eps: float) -> dict:
    """Survival fraction, Wilson interval and energy monotonicity over survivors."""
    n = len(records)
    surv = [r for r in records if r.survived and not r.aborted]
    k = len(surv)
    lo, hi = wilson_interval(k, n)
    margin_ok = sum(1 for r in records if r.survived and r.min_margin >= 0)
    return {
        "n_paths": n,
        "survivors": k,
        "survival_fraction": k / n,
        "wilson_95": [lo, hi],
        "target": 1.0 - eps,
        "target_consistent": hi >= 1.0 - eps,
        "margin_nonnegative": margin_ok,
        "survivors_monotone": sum(1 for r in surv if r.monotone),
        "max_rel_increase": max((r.max_rel_increase for r in surv), default=0.0),
        "T_2delta_before_T_star": sum(1 for r in surv if r.T_2delta is not None),
        "aborted": sum(1 for r in records if r.aborted),
    }


def run_global_ensemble(params: GlobalParams, cfg: GlobalRunConfig, seed: int = 0,
                        threads: int = 1) -> list[PathStats]:
    def one(p):
        return global_run(params, cfg, seed, p)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, range(cfg.n_paths)))
    return [one(p) for p in range(cfg.n_paths)]


def quadratic_lipschitz_scale(params: GlobalParams, cfg: GlobalRunConfig, samples: int = 8,
                              seed: int = 0) -> float:
    """Largest ``||Q_G(w)|| / ||<grad>^(1/2) w||`` over random data at the configured size."""
    g = cfg.grid
    spec = NormSpec(params.s, params.gamma, 0.0, "polynomial", 2)
    from .fields import fourier_power  # noqa: WPS433

    worst = 0.0
    for i in range(samples):
        w0 = initial_perturbation(g, params, seed, 10_000 + i)
        wG = gamma_transform(w0, params.U0, 0.0, 0.0, params)
        full = transformed_rhs(wG, params.U0, 0.0, 0.0, params, quadratic=True).explicit
        lin = transformed_rhs(wG, params.U0, 0.0, 0.0, params, quadratic=False).explicit
        q = math.sqrt(xs_norm_sq(full - lin, spec))
        d = math.sqrt(xs_norm_sq(fourier_power(wG, 0.5, "bracket"), spec))
        worst = max(worst, q / d if d else 0.0)
    return worst


def calibrate(eps: float, lam: float, U0: float, gamma: float, s: int, cfg: GlobalRunConfig,
              *, beta_floor: float = 64.0, alpha2: float = 1.0, delta_data: float = 1e-4,
              seed: int = 0) -> GlobalParams:
    """Recipe with ``beta = max(beta_floor, 4 L)``, ``L`` the measured quadratic scale."""
    p = parameter_recipe(eps, lam, U0, gamma, s, beta=beta_floor, alpha2=alpha2, delta_data=delta_data)
    L = quadratic_lipschitz_scale(p, cfg, seed=seed)
    beta = max(beta_floor, 4.0 * L)
    return parameter_recipe(eps, lam, U0, gamma, s, beta=beta, alpha2=alpha2, delta_data=delta_data)


def default_threads() -> int:
    env = os.environ.get("PRANDTL_THREADS")
    return int(env) if env else 1


__all__ = [
    "GlobalParams", "parameter_recipe", "hitting_prob_infinite", "hitting_prob_finite",
    "post_horizon_tail", "horizon_for_tail", "HittingResult", "hitting_prob_mc", "radius_path",
    "BarrierStats", "barrier_monitor", "gamma_transform", "GevreyConvolution", "GlobalRunConfig",
    "diagonal_rate", "TransformedDrift", "transformed_rhs", "PathStats", "initial_perturbation",
    "global_run", "sigma_fan", "wilson_interval", "survival_stats", "run_global_ensemble",
    "quadratic_lipschitz_scale", "calibrate",
]
