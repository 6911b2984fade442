"""Typed experiment setups built from a :class:`RunConfig`.

Every section has defaults, so an empty configuration runs. Unknown keys are
rejected so that typos fail loudly (exit code 2 from the CLI).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..fields import Grid, SpectralField, TangentialField, radius_multiplier
from ..gevrey_global import GlobalParams, GlobalRunConfig, calibrate, parameter_recipe
from ..local_solver import SchemeConfig, static_outflow, trajectory_outflow
from ..noise import (BernoulliConfig, LinearNoise, NoiseSpec, SeriesTerm, make_rng, run_bernoulli,
                     sample_increments)
from ..norms import xs_norm
from ..physics import CutoffParams
from .config import ConfigError, RunConfig, reject_unknown, take
from .corpus import random_field, random_tangential

PROFILES = ("gauss", "exp", "const")


def _profile(kind: str, y: np.ndarray) -> np.ndarray:
    if kind == "gauss":
        return np.exp(-y**2)
    if kind == "exp":
        return np.exp(-y)
    if kind == "const":
        return np.ones_like(y)
    raise ConfigError(f"profile must be one of {PROFILES}, got {kind!r}")


def _mode_scale(scale: np.ndarray, ndim: int) -> np.ndarray:
    """Per-Wiener-mode factor shaped to broadcast against ``ndim`` trailing axes."""
    return scale.reshape((scale.size,) + (1,) * ndim)


def grid_from(section: dict, where: str = "grid", **defaults) -> Grid:
    sec = dict(section)
    base = {"d": 2, "Nx": 16, "Ny": 64, "Lx": 2 * math.pi, "Ly": 6.0, "stretch": 0.0,
            "conormal_order": 12}
    base.update(defaults)
    kw = {
        "d": take(sec, "d", base["d"], int, where),
        "Nx": take(sec, "nx", base["Nx"], int, where),
        "Ny": take(sec, "ny", base["Ny"], int, where),
        "Lx": take(sec, "lx", base["Lx"], float, where),
        "Ly": take(sec, "ly", base["Ly"], float, where),
        "stretch": take(sec, "stretch", base["stretch"], float, where),
        "conormal_order": take(sec, "conormal_order", base["conormal_order"], int, where),
    }
    reject_unknown(sec, where)
    try:
        return Grid(**kw)
    except ValueError as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def noise_from(cfg: RunConfig, grid: Grid) -> NoiseSpec | None:
    """Noise spec from ``[noise]``, ``[term]`` blocks and ``[linear]``.

    All three absent gives :func:`default_noise`; ``enabled = false`` gives ``None``.
    """
    sec = cfg.section("noise")
    lin_sec = cfg.section("linear")
    if not sec and not cfg.terms and not lin_sec:
        return default_noise(grid)
    K = take(sec, "k", 4, int, "noise")
    rho = take(sec, "rho", 1.0, float, "noise")
    bound = take(sec, "decay_bound", math.inf, float, "noise")
    mode_decay = take(sec, "mode_decay", 0.5, float, "noise")
    enabled = take(sec, "enabled", True, bool, "noise")
    reject_unknown(sec, "noise")
    if not enabled:
        return None
    if K < 1:
        raise ConfigError("[noise] K must be >= 1")
    scale = mode_decay ** np.arange(K)
    terms = []
    for i, t in enumerate(cfg.terms):
        t = dict(t)
        where = f"term {i}"
        n = take(t, "n", 1, None, where)
        a0 = take(t, "a0", 0.0, float, where)
        prof = take(t, "a0_profile", "gauss", str, where)
        abar = take(t, "abar", 0.0, float, where)
        reject_unknown(t, where)
        if isinstance(n, list):
            n = tuple(n)
        a0f = a0 * _mode_scale(scale, grid.d + 1) * _profile(prof, grid.y)
        terms.append(SeriesTerm(n, a0f, abar * _mode_scale(scale, grid.d)))
    linear = None
    if lin_sec:
        G0 = take(lin_sec, "g0", 0.0, float, "linear")
        prof = take(lin_sec, "g0_profile", "gauss", str, "linear")
        Gbar = take(lin_sec, "gbar", 0.0, float, "linear")
        a = take(lin_sec, "a", 0.0, float, "linear")
        reject_unknown(lin_sec, "linear")
        g0 = G0 * _mode_scale(scale, grid.d + 1) * _profile(prof, grid.y)
        linear = LinearNoise(g0, Gbar * _mode_scale(scale, grid.d), a)
    try:
        return NoiseSpec(grid, K, tuple(terms), linear, rho, bound)
    except ValueError as exc:
        raise ConfigError(f"[noise] {exc}") from exc


def default_noise(grid: Grid, K: int = 4) -> NoiseSpec:
    """One linear-in-``u`` series term with a Gaussian profile, halving per Wiener mode."""
    a0 = 0.5 * _mode_scale(0.5 ** np.arange(K), grid.d + 1) * np.exp(-grid.y**2)
    return NoiseSpec(grid, K, (SeriesTerm(1, a0, 0.0),), None)


@dataclass(frozen=True)
class LocalSetup:
    grid: Grid
    scheme: str = "I"
    s: int = 4
    gamma0: float = 0.25
    sigma0: float = 0.1
    lam: float | None = None
    delta: float = 2.0
    M: float = 10.0
    N: float = 1e3
    dt: float = 1e-3
    T: float = 0.05
    n: float | None = None
    m_max: int = 8
    picard_tol: float = 1e-12
    data_norm: float = 0.04
    data_kmax: int = 3
    data_radius: float = 0.2
    U_amp: float = 0.01
    U_kmax: int = 2
    outflow: str = "static"
    noise: NoiseSpec | None = field(default=None, compare=False)

    def scheme_config(self, **over) -> SchemeConfig:
        kw = dict(grid=self.grid, s=self.s, gamma0=self.gamma0, sigma0=self.sigma0, lam=self.lam,
                  delta=self.delta, M=self.M, N=self.N, dt=self.dt, T=self.T, n=self.n,
                  m_max=self.m_max, picard_tol=self.picard_tol, noise=self.noise)
        kw.update(over)
        return SchemeConfig(**kw)

    def initial_data(self, seed: int, path: int, norm: float | None = None) -> SpectralField:
        """Random perturbation rescaled to a fixed ``X^s_{gamma0, sigma0}`` norm."""
        w0 = random_field(self.grid, make_rng(seed, path, 101), self.data_kmax, 1.0, self.data_radius)
        cfg = self.scheme_config()
        nrm = xs_norm(radius_multiplier(w0, self.sigma0), cfg.norm_spec(0.0))
        target = self.data_norm if norm is None else norm
        return w0 * (target / nrm) if nrm > 0 else w0

    def outflow_U(self, seed: int) -> TangentialField:
        return random_tangential(self.grid, make_rng(seed, 0, 202), self.U_kmax, self.U_amp)

    def outflow_schedule(self, seed: int, path_index: int):
        U = self.outflow_U(seed)
        if self.outflow == "static":
            return static_outflow(U)
        path = sample_increments(seed, self.scheme_config().steps, self.noise.K if self.noise else 1,
                                 self.dt, path=path_index + 1_000_000)
        bcfg = BernoulliConfig(self.noise or NoiseSpec.zero(self.grid, 1), lambda t, V: V * 0.0,
                               self.dt, self.s, self.sigma0, 0.0, CutoffParams(M=1e6))
        return trajectory_outflow(run_bernoulli(U, path, bcfg))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("noise")
        d["grid"] = self.grid.to_dict()
        return d


def local_from(cfg: RunConfig) -> LocalSetup:
    grid = grid_from(cfg.section("grid"))
    sec = cfg.section("local")
    w = "local"
    kw = dict(
        scheme=str(take(sec, "scheme", "I", None, w)),
        s=take(sec, "s", 4, int, w),
        gamma0=take(sec, "gamma0", 0.25, float, w),
        sigma0=take(sec, "sigma0", 0.1, float, w),
        lam=take(sec, "lam", None, float, w),
        delta=take(sec, "delta", 2.0, float, w),
        M=take(sec, "m", 10.0, float, w),
        N=take(sec, "n_out", 1e3, float, w),
        dt=take(sec, "dt", 1e-3, float, w),
        T=take(sec, "t", 0.05, float, w),
        n=take(sec, "n", None, float, w),
        m_max=take(sec, "m_max", 8, int, w),
        picard_tol=take(sec, "picard_tol", 1e-12, float, w),
        data_norm=take(sec, "data_norm", 0.04, float, w),
        data_kmax=take(sec, "data_kmax", 3, int, w),
        data_radius=take(sec, "data_radius", 0.2, float, w),
        U_amp=take(sec, "u_amp", 0.01, float, w),
        U_kmax=take(sec, "u_kmax", 2, int, w),
        outflow=take(sec, "outflow", "static", str, w),
    )
    reject_unknown(sec, w)
    if kw["scheme"] not in ("I", "II"):
        raise ConfigError("[local] scheme must be 'I' or 'II'")
    if kw["outflow"] not in ("static", "bernoulli"):
        raise ConfigError("[local] outflow must be 'static' or 'bernoulli'")
    noise = noise_from(cfg, grid)
    setup = LocalSetup(grid=grid, noise=noise, **kw)
    try:
        setup.scheme_config()
    except ValueError as exc:
        raise ConfigError(f"[local] {exc}") from exc
    return setup


@dataclass(frozen=True)
class GlobalSetup:
    params: GlobalParams
    run: GlobalRunConfig
    calibrated: bool

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "run": self.run.to_dict(),
                "calibrated": self.calibrated}


def global_from(cfg: RunConfig) -> GlobalSetup:
    sec = cfg.section("global")
    w = "global"
    eps = take(sec, "eps", 0.1, float, w)
    lam = take(sec, "lam", 10.0, float, w)
    U0 = take(sec, "u0", 0.1, float, w)
    gamma = take(sec, "gamma", 1.5, float, w)
    s = take(sec, "s", 4, int, w)
    beta = take(sec, "beta", 64.0, float, w)
    alpha2 = take(sec, "alpha2", 1.0, float, w)
    delta = take(sec, "delta_data", 1e-4, float, w)
    do_cal = take(sec, "calibrate", False, bool, w)
    T = take(sec, "t", 1.0, float, w)
    dt = take(sec, "dt", 2e-3, float, w)
    n_paths = take(sec, "paths", 80, int, w)
    min_surv = take(sec, "min_survivors", 64, int, w)
    slack = take(sec, "energy_slack", 1e-8, float, w)
    reject_unknown(sec, w)
    grid = grid_from(cfg.section("global.grid"), "global.grid", Nx=16, Ny=64, Ly=8.0, stretch=2.0)
    if grid.d != 2:
        raise ConfigError("[global.grid] the global experiment needs d = 2")
    run = GlobalRunConfig(grid, dt, T, n_paths, min_surv, slack)
    try:
        if do_cal:
            params = calibrate(eps, lam, U0, gamma, s, run, beta_floor=beta, alpha2=alpha2,
                               delta_data=delta)
        else:
            params = parameter_recipe(eps, lam, U0, gamma, s, beta=beta, alpha2=alpha2,
                                      delta_data=delta)
    except ValueError as exc:
        raise ConfigError(f"[global] {exc}") from exc
    return GlobalSetup(params, run, do_cal)


@dataclass(frozen=True)
class MCSetup:
    paths: int = 100_000
    dt: float = 1e-3
    T: float | None = None
    block: int = 4096
    tail_tol: float = 1e-4


def mc_from(cfg: RunConfig) -> MCSetup:
    sec = cfg.section("mc")
    w = "mc"
    out = MCSetup(take(sec, "paths", 100_000, int, w), take(sec, "dt", 1e-3, float, w),
                  take(sec, "t", None, float, w), take(sec, "block", 4096, int, w),
                  take(sec, "tail_tol", 1e-4, float, w))
    reject_unknown(sec, w)
    if out.paths < 2 or out.dt <= 0 or out.block < 1:
        raise ConfigError("[mc] need paths >= 2, dt > 0, block >= 1")
    return out


@dataclass(frozen=True)
class BernoulliSetup:
    grid: Grid
    beta: float = 1.0
    alpha1: float = 0.5
    U0: float = 1.0
    dt: float = 1e-3
    T: float = 1.0
    s: int = 4
    sigma0: float = 0.1
    mode: str = "ou"
    amp: float = 0.05
    kmax: int = 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        return d


def bernoulli_from(cfg: RunConfig) -> BernoulliSetup:
    sec = cfg.section("bernoulli")
    w = "bernoulli"
    grid = grid_from(cfg.section("bernoulli.grid"), "bernoulli.grid", Nx=16, Ny=16)
    out = BernoulliSetup(
        grid, take(sec, "beta", 1.0, float, w), take(sec, "alpha1", 0.5, float, w),
        take(sec, "u0", 1.0, float, w), take(sec, "dt", 1e-3, float, w), take(sec, "t", 1.0, float, w),
        take(sec, "s", 4, int, w), take(sec, "sigma0", 0.1, float, w), take(sec, "mode", "ou", str, w),
        take(sec, "amp", 0.05, float, w), take(sec, "kmax", 2, int, w))
    reject_unknown(sec, w)
    if out.mode not in ("ou", "transport"):
        raise ConfigError("[bernoulli] mode must be 'ou' or 'transport'")
    return out


def run_section(cfg: RunConfig) -> dict:
    sec = cfg.section("run")
    out = {"seed": take(sec, "seed", 0, int, "run"), "paths": take(sec, "paths", 4, int, "run")}
    reject_unknown(sec, "run")
    return out


__all__ = ["grid_from", "noise_from", "default_noise", "LocalSetup", "local_from", "GlobalSetup",
           "global_from", "MCSetup", "mc_from", "BernoulliSetup", "bernoulli_from", "run_section"]
