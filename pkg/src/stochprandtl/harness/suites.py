"""
Verification suites.

Estimates with existence-level constants are certified the only falsifiable
way: the measured worst ratio ``lhs / rhs`` over a random corpus must be
finite and must not drift by more than a factor 2 under one grid refinement.
Identities are checked against absolute tolerances.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from statistics import median

import numpy as np
from scipy import integrate, special

from ..fields import (
    Grid,
    SpectralField,
    TangentialField,
    antiderivative_y,
    conormal_Z,
    fourier_power,
    from_spectral,
    normal_derivative,
    product,
    radius_multiplier,
    tangential_derivative,
    to_spectral,
)
from ..local_solver import increment_energy, picard_iterate, scheme_I_solve
from ..noise import LinearNoise, NoiseSpec, SeriesTerm, evaluate_F, evaluate_F_limit, make_rng, sample_increments
from ..norms import NormSpec, hx_norm, xs_norm, xs_norm_sq
from .corpus import CorpusSpec, random_field, random_tangential
from .setups import LocalSetup, default_noise


# -- reports --------------------------------------------------------------------------

@dataclass
class Check:
    """One inequality or identity.

    ``kind="ratio"``: pass iff every value is finite and the refinement drift
    ``max(a/b, b/a)`` of the two maxima is below ``ceiling``.
    ``kind="error"``: pass iff the max value is at most ``tolerance``.
    ``kind="bound"``: pass iff the max value is at most ``ceiling``.
    ``kind="flag"``: pass iff every value is nonzero.
    """

    name: str
    kind: str
    values: list
    refined: list | None = None
    ceiling: float | None = None
    tolerance: float | None = None
    note: str = ""

    @property
    def max_value(self) -> float:
        return float(max(self.values)) if self.values else 0.0

    @property
    def refined_max(self) -> float | None:
        return float(max(self.refined)) if self.refined else None

    @property
    def drift(self) -> float | None:
        a, b = self.max_value, self.refined_max
        if b is None:
            return None
        if a == 0 and b == 0:
            return 1.0
        if a == 0 or b == 0:
            return math.inf
        return max(a / b, b / a)

    @property
    def passed(self) -> bool:
        vals = list(self.values) + list(self.refined or [])
        if not vals or not all(np.isfinite(vals)):
            return False
        if self.kind == "ratio":
            d = self.drift
            return d is None or d < (self.ceiling or 2.0)
        if self.kind == "error":
            return self.max_value <= self.tolerance
        if self.kind == "bound":
            return self.max_value <= self.ceiling
        if self.kind == "flag":
            return all(bool(v) for v in self.values)
        raise ValueError(f"unknown check kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "cases": len(self.values),
                "max": self.max_value, "refined_max": self.refined_max, "drift": self.drift,
                "ceiling": self.ceiling, "tolerance": self.tolerance, "passed": self.passed,
                "note": self.note, "values": [float(v) for v in self.values]}


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)
    min_cases: int = 1
    meta: dict = field(default_factory=dict)
    cases: int | None = None

    @property
    def case_count(self) -> int:
        """Number of independent cases; defaults to the largest check."""
        if self.cases is not None:
            return self.cases
        return max((len(c.values) for c in self.checks), default=0)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and self.case_count >= self.min_cases and all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        out = [c.name for c in self.checks if not c.passed]
        if self.case_count < self.min_cases:
            out.append(f"case count {self.case_count} < {self.min_cases}")
        return out

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "case_count": self.case_count,
                "min_cases": self.min_cases, "meta": self.meta,
                "checks": [c.to_dict() for c in self.checks]}


def _ratio(lhs: float, rhs: float) -> float:
    """``lhs / rhs`` with ``0/0 = 0``; a nonzero lhs over zero rhs is infinite."""
    if lhs == 0.0:
        return 0.0
    return lhs / rhs if rhs > 0 else math.inf


def _pmap(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# -- product estimates ----------------------------------------------------------------------

class _Norms:
    """``X^s_{gamma, sigma}`` family on one grid with a fixed radius multiplier."""

    def __init__(self, spec: NormSpec):
        self.spec = spec

    def __call__(self, f: SpectralField, s: int | None = None) -> float:
        sp = self.spec if s is None else self.spec.with_(s=s)
        return xs_norm(radius_multiplier(f, sp.sigma, p=sp.gevrey_p), sp)

    def hx(self, U: TangentialField) -> float:
        if self.spec.gevrey_p == 1:
            return hx_norm(U, self.spec.s, self.spec.sigma)
        return hx_norm(radius_multiplier(U, self.spec.sigma, p=2), self.spec.s, 0.0)


def bracket(f, a: float):
    """``<grad_x>^a f``."""
    return fourier_power(f, a, "bracket")


def _product_cases(u: SpectralField, v: SpectralField, U: TangentialField, N: _Norms,
                   gevrey: bool) -> dict:
    s = N.spec.s
    dyu, dyv = normal_derivative(u, 1), normal_derivative(v, 1)
    out = {}
    if not gevrey:
        out["uv"] = _ratio(N(product(u, v)), N(u) * N(v, s - 1) + N(u, s - 1) * N(v))
        lhs = N(product(antiderivative_y(v), dyu))
        out["dyinv_v_dyu"] = _ratio(lhs, N(dyu, s - 1) * N(v) + N(dyu) * N(v, s - 1))
        out["U_v"] = _ratio(N(product(U, v)), N.hx(U) * N(v))
        lhs = N(bracket(product(U, tangential_derivative(v)), -0.5))
        out["U_dxv"] = _ratio(lhs, N.hx(U) * N(bracket(v, 0.5)))
    lhs = N(bracket(product(u, tangential_derivative(v)), -0.5))
    out["u_dxv"] = _ratio(lhs, N(u) * N(bracket(v, 0.5)))
    vert = antiderivative_y(tangential_derivative(u))
    lhs = N(bracket(product(vert, dyv), -0.5))
    out["vert_dyv"] = _ratio(lhs, N(u) * N(dyv) + N(v) * N(bracket(u, 0.5)))
    return out


def _product_corpus(grid: Grid, spec: CorpusSpec):
    pairs = []
    for i in range(spec.count):
        rng = make_rng(spec.seed, i)
        a1, a2 = rng.uniform(spec.amp_min, spec.amp_max, 2)
        u = random_field(grid, rng, spec.kmax, a1, spec.radius, spec.family)
        v = random_field(grid, rng, spec.kmax, a2, spec.radius, spec.family)
        U = random_tangential(grid, rng, spec.kmax, 1.0, spec.radius)
        pairs.append((u, v, U))
    return pairs


def product_estimate_suite(grid: Grid | None = None, corpus: CorpusSpec | None = None,
                           spec: NormSpec | None = None, gevrey_spec: NormSpec | None = None,
                           threads: int = 1, min_cases: int = 100) -> SuiteReport:
    """Bilinear estimates in the analytic and Gevrey scales, measured on a corpus and its refinement."""
    grid = grid or Grid(Nx=32, Ny=64, Ly=6.0)
    corpus = corpus or CorpusSpec(count=100, kmax=4)
    spec = spec or NormSpec(s=4, gamma=0.25, sigma=0.1)
    gevrey_spec = gevrey_spec or NormSpec(s=4, gamma=1.5, sigma=0.1, weight_kind="polynomial", gevrey_p=2)
    fine = Grid(grid.d, grid.Nx, 2 * grid.Ny, grid.Lx, grid.Ly, grid.stretch, grid.conormal_order)
    results = {}
    for g in (grid, fine):
        pairs = _product_corpus(g, corpus)

        def one(p):
            a = _product_cases(*p, _Norms(spec), gevrey=False)
            b = _product_cases(p[0], p[1], p[2], _Norms(gevrey_spec), gevrey=True)
            return a, {"gevrey_" + k: v for k, v in b.items()}

        rows = _pmap(one, pairs, threads)
        merged = {}
        for a, b in rows:
            for k, v in {**a, **b}.items():
                merged.setdefault(k, []).append(v)
        results[g.Ny] = merged
    checks = [Check(k, "ratio", results[grid.Ny][k], results[fine.Ny][k], ceiling=2.0)
              for k in results[grid.Ny]]
    # zero cases return 0 exactly
    z = SpectralField.zeros(grid)
    u, v, U = _product_corpus(grid, CorpusSpec(count=1, kmax=corpus.kmax, seed=corpus.seed))[0]
    zeros = list(_product_cases(z, z, TangentialField.zeros(grid), _Norms(spec), False).values())
    zeros += list(_product_cases(z, z, TangentialField.zeros(grid), _Norms(gevrey_spec), True).values())
    # x-independent v kills u . grad_x v
    vx = to_spectral(np.broadcast_to(from_spectral(v).mean(axis=1, keepdims=True), grid.shape).copy(), grid)
    zeros.append(_product_cases(u, vx, U, _Norms(spec), False)["u_dxv"])
    checks.append(Check("zero_cases", "error", [abs(x) for x in zeros], tolerance=0.0))
    return SuiteReport("product", checks, min_cases=min_cases, cases=len(checks[0].values),
                       meta={"grid": grid.to_dict(), "refined_Ny": fine.Ny, "spec": asdict(spec),
                             "gevrey_spec": asdict(gevrey_spec), "corpus": asdict(corpus)})


# -- noise estimates ---------------------------------------------------------------------------

def suite_noise_spec(grid: Grid, K: int = 3) -> NoiseSpec:
    """Quadratic series term plus a half-derivative linear part, decaying per Wiener mode."""
    dec = 0.5 ** np.arange(K)
    shp0 = (K,) + (1,) * (grid.d + 1)
    shpb = (K,) + (1,) * grid.d
    a0 = 0.4 * dec.reshape(shp0) * np.exp(-grid.y**2)
    term = SeriesTerm(2, a0, 0.2 * dec.reshape(shpb))
    lin = LinearNoise(0.3 * dec.reshape(shp0) * np.exp(-grid.y**2), 0.1 * dec.reshape(shpb), 0.5)
    return NoiseSpec(grid, K, (term,), lin)


def _hs_norm(fields, N: _Norms) -> float:
    return math.sqrt(sum(N(f) ** 2 for f in fields))


def _noise_cases(v, vt, U, spec: NoiseSpec, N: _Norms) -> dict:
    a = spec.linear.a if spec.linear is not None else 0.0
    grid = v.grid
    Ue = U.extend()
    F = evaluate_F(v + Ue, spec)
    Ft = evaluate_F(vt + Ue, spec)
    Fb = [f.extend() for f in evaluate_F_limit(U, spec)]
    s = N.spec.s
    hxa = hx_norm(U, s + a, N.spec.sigma)
    hxa1 = hx_norm(U, s + a + 1, N.spec.sigma)
    out = {}
    out["lipschitz"] = _ratio(_hs_norm([x - y for x, y in zip(F, Ft)], N), N(bracket(v - vt, a)))
    diff = [x - y for x, y in zip(F, Fb)]
    out["far_field"] = _ratio(_hs_norm(diff, N), N(bracket(v, a)) + hxa)
    out["far_field_grad"] = _ratio(_hs_norm([tangential_derivative(d) for d in diff], N),
                                   N(bracket(v, a + 1)) + hxa1)
    del grid
    return out


def noise_estimate_suite(grid: Grid | None = None, corpus: CorpusSpec | None = None,
                         spec: NormSpec | None = None, noise: NoiseSpec | None = None,
                         threads: int = 1, min_cases: int = 40) -> SuiteReport:
    """Lipschitz and far-field estimates of the force, plus zero and linear-only cases."""
    grid = grid or Grid(Nx=32, Ny=64, Ly=6.0)
    corpus = corpus or CorpusSpec(count=40, kmax=3, amp_min=0.05, amp_max=0.5)
    spec = spec or NormSpec(s=4, gamma=0.25, sigma=0.1)
    fine = Grid(grid.d, grid.Nx, 2 * grid.Ny, grid.Lx, grid.Ly, grid.stretch, grid.conormal_order)
    res = {}
    for g in (grid, fine):
        ns = noise if (noise is not None and g == grid) else suite_noise_spec(g)
        lin_only = NoiseSpec(g, ns.K, (), suite_noise_spec(g).linear)
        pairs = _product_corpus(g, corpus)
        N = _Norms(spec)

        def one(p, ns=ns, lin_only=lin_only, N=N):
            v, vt, U = p
            U = U * 0.2
            out = _noise_cases(v, vt, U, ns, N)
            lin = _noise_cases(v, vt, U, lin_only, N)
            out["linear_only_lipschitz"] = lin["lipschitz"]
            return out

        rows = _pmap(one, pairs, threads)
        res[g.Ny] = {k: [r[k] for r in rows] for k in rows[0]}
    checks = [Check(k, "ratio", res[grid.Ny][k], res[fine.Ny][k], ceiling=2.0) for k in res[grid.Ny]]
    # u = u~ gives zero difference
    ns = suite_noise_spec(grid)
    v, _, U = _product_corpus(grid, CorpusSpec(count=1, kmax=corpus.kmax, seed=corpus.seed))[0]
    F = evaluate_F(v + U.extend(), ns)
    zero = _hs_norm([f - f for f in F], _Norms(spec))
    checks.append(Check("zero_difference", "error", [zero], tolerance=0.0))
    return SuiteReport("noise", checks, min_cases=min_cases, cases=len(checks[0].values),
                       meta={"grid": grid.to_dict(), "refined_Ny": fine.Ny, "spec": asdict(spec),
                             "corpus": asdict(corpus), "K": ns.K})


# -- Gaussian tail of the corrector -----------------------------------------------------------------

def corrector_tail_sq(t: float, gamma0: float, delta: float) -> float:
    """``int_0^inf exp(2 gamma(t) y^2) erfc(y / (2 sqrt(t + 1/(8 gamma0))))^2 dy`` by adaptive quadrature."""
    g = gamma0 / (1.0 + t) ** delta
    c = 1.0 / (2.0 * math.sqrt(t + 1.0 / (8.0 * gamma0)))

    def f(y):
        # erfc(c y) = exp(-c^2 y^2) erfcx(c y) keeps the integrand finite
        return math.exp((2 * g - 2 * c * c) * y * y) * special.erfcx(c * y) ** 2

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def tail_bound_sq(gamma0: float) -> float:
    """``int_0^inf exp(-2 gamma0 y^2 / 3) dy``."""
    return 0.5 * math.sqrt(3.0 * math.pi / (2.0 * gamma0))


def _tail_derivative(y, t: float, gamma0: float, n: int, weight: float = 0.0):
    """``exp(weight y^2) d_y^n (psi - 1)`` in closed form via Hermite polynomials (``n >= 1``)."""
    c = 1.0 / (2.0 * math.sqrt(t + 1.0 / (8.0 * gamma0)))
    y = np.asarray(y, dtype=float)
    z = c * y
    return ((-1.0) ** (n + 1) * c**n * (2.0 / math.sqrt(math.pi)) * special.eval_hermite(n - 1, z)
            * np.exp((weight - c * c) * y * y))


def derivative_tail_sq(t: float, gamma0: float, delta: float, j: int, l: int) -> float:
    """``|| exp(gamma(t) y^2) Z^j d_y^l (psi - 1) ||^2`` by adaptive quadrature, ``j + l >= 1``."""
    g = gamma0 / (1.0 + t) ** delta

    def f(y):
        return (y**j * float(_tail_derivative(y, t, gamma0, j + l, g))) ** 2

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val


def _grid_tail_sq(grid: Grid, t: float, gamma0: float, delta: float, j: int = 0, l: int = 0) -> float:
    g = gamma0 / (1.0 + t) ** delta
    # -erfc avoids the cancellation in erf - 1 under the growing weight
    f = -special.erfc(grid.y / (2.0 * math.sqrt(t + 1.0 / (8.0 * gamma0))))
    if l:
        f = grid.diff_matrix(1, grid.conormal_order) @ f
    if j:
        f = grid.conormal_matrix(j) @ f
    return float(np.sum(grid.trapz_weights * np.exp(2 * g * grid.y**2) * f**2))


def gaussian_tail_suite(grid: Grid | None = None, gamma0: float = 0.25, delta: float = 2.0,
                        s: int = 4, n_times: int = 9) -> SuiteReport:
    """Weighted norms of ``psi - 1`` against the Gaussian tail bound on ``[0, 1/(16 gamma0)]``."""
    grid = grid or Grid(Nx=8, Ny=256, Ly=8.0)
    times = np.linspace(0.0, 1.0 / (16.0 * gamma0), n_times)
    bound = tail_bound_sq(gamma0)
    exact = [corrector_tail_sq(t, gamma0, delta) for t in times]
    disc = [_grid_tail_sq(grid, t, gamma0, delta) for t in times]
    checks = [
        Check("quadrature_vs_oracle_t0", "error", [abs(disc[0] - exact[0]) / exact[0]], tolerance=1e-3,
              note="trapezoid rule, second order in the grid spacing"),
        Check("quadrature_vs_oracle", "error", [abs(a - b) / b for a, b in zip(disc, exact)], tolerance=1e-3),
        Check("bounded_by_tail", "bound", [e / bound for e in exact], ceiling=1.0),
        Check("monotone_in_t", "flag", [float(b >= a * (1 - 1e-12)) for a, b in zip(exact, exact[1:])]),
    ]
    spread, fd_err, table = [], [], {}
    for j in range(s + 1):
        for l in (0, 1):
            if j + l == 0 or j + l > s:
                continue
            vals = [derivative_tail_sq(t, gamma0, delta, j, l) for t in times]
            grid_vals = [_grid_tail_sq(grid, t, gamma0, delta, j, l) for t in times]
            table[f"{j},{l}"] = vals
            spread.append(max(vals) / min(vals))
            fd_err.append(max(abs(a - b) / b for a, b in zip(grid_vals, vals)))
    checks.append(Check("derivatives_uniform_in_t", "bound", spread, ceiling=10.0,
                        note="max/min over the time grid of each Z^j d_y^l norm"))
    checks.append(Check("derivatives_grid_vs_oracle", "error", fd_err, tolerance=1e-2))
    tail = math.exp(-2.0 * gamma0 * grid.Ly**2 / 3.0)
    return SuiteReport("gaussian_tail", checks, meta={"grid": grid.to_dict(), "gamma0": gamma0,
                                                      "delta": delta, "times": times.tolist(),
                                                      "exact": exact, "bound": bound,
                                                      "derivative_norms": table, "domain_tail": tail})


# -- identities -------------------------------------------------------------------------------------

def _ibp_defect(Ny: int, Ly: float) -> float:
    g = Grid(Nx=8, Ny=Ny, Ly=Ly)
    y = g.y
    u = np.cos(y) * np.exp(-0.1 * y)
    v = np.sin(0.7 * y) + 1.0
    D1, D2 = g.diff_matrix(1, 2), g.diff_matrix(2, 2)
    w = g.trapz_weights
    lhs = float(np.sum(w * (D2 @ u) * v))
    du_exact = -np.sin(y) * np.exp(-0.1 * y) - 0.1 * u
    flux = du_exact[-1] * v[-1] - du_exact[0] * v[0]
    rhs = flux - float(np.sum(w * (D1 @ u) * (D1 @ v)))
    return abs(lhs - rhs)


def identity_suite(grid: Grid | None = None, corpus: CorpusSpec | None = None) -> SuiteReport:
    """Conormal commutator, Parseval and the discrete integration by parts order."""
    grid = grid or Grid(Nx=16, Ny=200, Ly=10.0)
    corpus = corpus or CorpusSpec(count=10, kmax=3)
    fields = [random_field(grid, make_rng(corpus.seed, i), corpus.kmax, 1.0) for i in range(corpus.count)]
    comm = []
    for f in fields:
        yf = f.replace(f.coeffs * grid.y)
        for j in range(1, 5):
            lhs = conormal_Z(yf, j) - conormal_Z(f, j).replace(conormal_Z(f, j).coeffs * grid.y)
            rhs = conormal_Z(f, j - 1).replace(j * grid.y * conormal_Z(f, j - 1).coeffs)
            scale = max(np.abs(rhs.coeffs).max(), 1e-300)
            comm.append(float(np.abs(lhs.coeffs - rhs.coeffs).max() / scale))
    pars = []
    for f in fields:
        vals = from_spectral(f)
        phys = np.sum(vals**2, axis=tuple(range(vals.ndim - 1))) * (grid.Lx / grid.Nx) ** (grid.d - 1)
        spec = grid.area * np.sum(np.abs(f.coeffs) ** 2, axis=tuple(range(f.coeffs.ndim - 1)))
        pars.append(float(np.max(np.abs(phys - spec)) / max(np.max(phys), 1e-300)))
    sizes = (64, 128, 256, 512)
    defects = [_ibp_defect(n, 6.0) for n in sizes]
    orders = [math.log2(a / b) for a, b in zip(defects, defects[1:])]
    checks = [
        Check("commutator", "error", comm, tolerance=1e-10),
        Check("parseval", "error", pars, tolerance=1e-10),
        Check("ibp_order", "error", [abs(o - 2.0) for o in orders], tolerance=0.25,
              note="observed order of the boundary defect minus the stencil order 2"),
    ]
    return SuiteReport("identity", checks, meta={"grid": grid.to_dict(), "ibp_sizes": list(sizes),
                                                 "ibp_defects": defects, "ibp_orders": orders})


# -- contraction and consistency ------------------------------------------------------------------

def picard_setup(T: float = 0.05) -> LocalSetup:
    g = Grid(Nx=16, Ny=64, Ly=6.0)
    return LocalSetup(grid=g, T=T, M=10.0, sigma0=0.1, data_norm=0.04, data_radius=0.2,
                      m_max=6, noise=default_noise(g))


def contraction_run(setup: LocalSetup, seed: int, path_index: int) -> list:
    cfg = setup.scheme_config()
    path = sample_increments(seed, cfg.steps, cfg.K, cfg.dt, path=path_index)
    w0 = setup.initial_data(seed, path_index)
    res = picard_iterate(cfg, path, w0, setup.outflow_schedule(seed, path_index))
    return res.increments


def median_ratios(increments: list[list]) -> list:
    m = min(len(r) for r in increments)
    out = []
    for k in range(1, m):
        out.append(median(r[k] / r[k - 1] if r[k - 1] > 0 else 0.0 for r in increments))
    return out


def contraction_suite(setup: LocalSetup | None = None, n_paths: int = 32, seed: int = 0,
                      threads: int = 1, trend_taus=(0.025, 0.1), trend_paths: int = 4,
                      min_cases: int = 1) -> SuiteReport:
    """Median Picard increment ratios on an ensemble; zero data and horizon trend."""
    setup = setup or picard_setup()
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        incs = _pmap(lambda p: contraction_run(setup, seed, p), range(n_paths), threads)
        ratios = median_ratios(incs)
        trend = {}
        for tau in sorted(set(trend_taus) | {setup.T}):
            st = replace(setup, T=tau)
            sub = incs[:trend_paths] if tau == setup.T else \
                _pmap(lambda p, st=st: contraction_run(st, seed, p), range(trend_paths), threads)
            trend[tau] = median(r[1] / r[0] for r in sub)
        zcfg = setup.scheme_config()
        zpath = sample_increments(seed, zcfg.steps, zcfg.K, zcfg.dt)
        zres = picard_iterate(zcfg, zpath, SpectralField.zeros(setup.grid))
    taus = sorted(trend)
    checks = [
        Check("median_ratio_below_one", "bound", ratios, ceiling=1.0 - 1e-12),
        Check("zero_data_instant", "error", [zres.increments[0]], tolerance=0.0),
        Check("ratio_trend_with_horizon", "flag",
              [float(trend[b] >= trend[a]) for a, b in zip(taus, taus[1:])],
              note="first-sweep median ratio is nondecreasing in the horizon"),
    ]
    return SuiteReport("contraction", checks, min_cases=min_cases, cases=n_paths, meta={
        "n_paths": n_paths, "seed": seed, "median_ratios": ratios, "setup": setup.to_dict(),
        "trend": {str(k): v for k, v in trend.items()}, "increments": incs})


def consistency_setup() -> LocalSetup:
    g = Grid(Nx=64, Ny=64, Ly=6.0)
    return LocalSetup(grid=g, sigma0=0.5, M=1e3, N=1e9, data_kmax=20, data_radius=2.0,
                      data_norm=0.04, noise=default_noise(g))


def consistency_run(setup: LocalSetup, seed: int, path_index: int, ns=(4, 8, 16)) -> dict:
    base = setup.scheme_config()
    path = sample_increments(seed, base.steps, base.K, base.dt, path=path_index)
    w0 = setup.initial_data(seed, path_index)
    out = setup.outflow_schedule(seed, path_index)
    trajs = {n: scheme_I_solve(setup.scheme_config(n=n), path, w0, out, keep_fields=True)[1] for n in ns}
    d = {f"{a}-{b}": increment_energy(trajs[a], trajs[b], base) for a, b in zip(ns, ns[1:])}
    return d


def consistency_suite(setup: LocalSetup | None = None, n_paths: int = 2, seed: int = 0,
                      threads: int = 1, ns=(4, 8, 16), min_cases: int = 1) -> SuiteReport:
    """Distances between regularized runs on shared paths shrink with ``n``."""
    setup = setup or consistency_setup()
    rows = _pmap(lambda p: consistency_run(setup, seed, p, ns), range(n_paths), threads)
    keys = list(rows[0])
    dec, slopes = [], []
    for r in rows:
        vals = [r[k] for k in keys]
        dec.append(float(all(b < a for a, b in zip(vals, vals[1:]))))
        slopes.append(math.log(vals[-1] / vals[0]) / math.log(ns[-2] / ns[0]) if vals[0] > 0 else -math.inf)
    checks = [
        Check("strictly_decreasing", "flag", dec),
        Check("loglog_slope", "bound", slopes, ceiling=-1.0),
    ]
    return SuiteReport("consistency", checks, min_cases=min_cases, cases=n_paths, meta={"distances": rows, "ns": list(ns),
                                                    "setup": setup.to_dict()})


SUITES = {
    "product": product_estimate_suite,
    "noise": noise_estimate_suite,
    "gaussian_tail": gaussian_tail_suite,
    "identity": identity_suite,
    "contraction": contraction_suite,
    "consistency": consistency_suite,
}

__all__ = ["Check", "SuiteReport", "product_estimate_suite", "noise_estimate_suite",
           "gaussian_tail_suite", "identity_suite", "contraction_suite", "consistency_suite",
           "corrector_tail_sq", "derivative_tail_sq", "tail_bound_sq", "suite_noise_spec", "picard_setup",
           "consistency_setup", "median_ratios", "SUITES"]
