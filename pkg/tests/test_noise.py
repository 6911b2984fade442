import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from stochprandtl.fields import Grid, TangentialField, from_spectral, product, to_spectral
from stochprandtl.harness.corpus import random_field, random_tangential
from stochprandtl.noise import (
    BernoulliConfig, LinearNoise, NoiseSpec, OUState, SeriesTerm, WienerPath, evaluate_F,
    evaluate_F_limit, hilbert_schmidt_sq, homogenized_noise, ito_increment, ito_isometry_check,
    make_rng, ou_em_step, ou_exact, ou_strong_errors, run_bernoulli, sample_increments,
)
from stochprandtl.physics import CorrectorParams, CutoffParams, OutflowState, boundary_profile

G = Grid(Nx=16, Ny=48, Ly=6.0)


def smooth(seed, kmax=2):
    return random_field(G, make_rng(seed, 3), kmax)


class TestWiener:
    def test_reproducible(self):
        a = sample_increments(7, 40, 3, 0.01, path=2)
        b = sample_increments(7, 40, 3, 0.01, path=2)
        np.testing.assert_array_equal(a.increments, b.increments)
        c = sample_increments(7, 40, 3, 0.01, path=3)
        assert not np.array_equal(a.increments, c.increments)

    def test_rng_keys(self):
        x = make_rng(1, 2, 3).standard_normal(4)
        np.testing.assert_array_equal(x, make_rng(1, 2, 3).standard_normal(4))
        assert not np.array_equal(x, make_rng(1, 3, 2).standard_normal(4))

    def test_moments(self):
        dt = 0.02
        z = sample_increments(11, 20000, 2, dt).increments.ravel()
        n = z.size
        assert abs(z.mean()) < 4 * math.sqrt(dt / n)
        # chi-square interval for the sample variance
        lo, hi = stats.chi2.ppf([1e-4, 1 - 1e-4], n - 1) / (n - 1)
        assert lo * dt < z.var(ddof=1) < hi * dt
        assert stats.kstest(z / math.sqrt(dt), "norm").pvalue > 1e-4

    def test_non_anticipating(self):
        # extending the horizon never changes earlier increments
        short = sample_increments(5, 30, 4, 0.1).increments
        long = sample_increments(5, 80, 4, 0.1).increments
        np.testing.assert_array_equal(long[:30], short)

    def test_uncorrelated_steps(self):
        z = sample_increments(3, 40000, 1, 1.0).increments[:, 0]
        r = np.corrcoef(z[:-1], z[1:])[0, 1]
        assert abs(r) < 4 / math.sqrt(z.size)

    def test_brownian_and_coarsen(self):
        w = sample_increments(1, 64, 2, 1 / 64)
        c = w.coarsen(4)
        assert c.steps == 16 and c.dt == pytest.approx(1 / 16)
        np.testing.assert_allclose(c.brownian(1), w.brownian(1)[::4], atol=1e-14)
        assert w.times()[-1] == pytest.approx(1.0)

    def test_save_load(self, tmp_path):
        w = sample_increments(9, 10, 3, 0.05, path=4)
        w.save(tmp_path / "w.bin")
        r = WienerPath.load(tmp_path / "w.bin")
        assert (r.seed, r.path_index, r.dt) == (9, 4, 0.05)
        np.testing.assert_array_equal(r.increments, w.increments)

    @pytest.mark.parametrize("args", [(0, 10, 0, 0.1), (0, -1, 2, 0.1), (0, 10, 2, 0.0)])
    def test_validation(self, args):
        with pytest.raises(ValueError):
            sample_increments(*args)


class TestForce:
    def test_linear_identity(self):
        u = smooth(0)
        F = evaluate_F(u, NoiseSpec.linear_only(G, 3, G0=0.0, Gbar=1.0))
        for Fi in F:
            np.testing.assert_allclose(Fi.coeffs, u.coeffs, atol=1e-13)

    def test_square(self):
        u = smooth(1)
        a0 = np.zeros((2, *G.shape))
        a0[1] = 1.0
        spec = NoiseSpec(G, 2, (SeriesTerm(2, a0, 0.0),))
        F = evaluate_F(u, spec)
        assert np.max(np.abs(F[0].coeffs)) == 0
        np.testing.assert_allclose(F[1].coeffs, product(u, u).coeffs, atol=1e-12)

    def test_mode_dependent_gbar(self):
        u = smooth(2)
        gbar = np.arange(1.0, 4.0)[:, None, None]
        F = evaluate_F(u, NoiseSpec.linear_only(G, 3, Gbar=gbar))
        for i, Fi in enumerate(F):
            np.testing.assert_allclose(Fi.coeffs, (u * (i + 1.0)).coeffs, atol=1e-12)

    def test_limit_ignores_local_part(self):
        U = random_tangential(G, make_rng(0, 1), 2, 0.5)
        spec = NoiseSpec(G, 2, (SeriesTerm(1, 5.0, 0.5),), LinearNoise(3.0, 2.0))
        for Fb in evaluate_F_limit(U, spec):
            np.testing.assert_allclose(Fb.coeffs, (U * 2.5).coeffs, atol=1e-13)

    def test_homogenized_noise_cancels(self):
        # w = 0 and a purely far-field linear force leave nothing after subtraction
        U = TangentialField.constant(G, 0.7)
        psi = CorrectorParams().profile(0.1, G.y)
        us = boundary_profile(0.1, U, CorrectorParams())
        out = homogenized_noise(smooth(0) * 0.0, us, U, psi, NoiseSpec.linear_only(G, 2, Gbar=1.3))
        for f in out:
            assert np.max(np.abs(f.coeffs)) < 1e-15

    def test_fractional_linear(self):
        X, Y = np.meshgrid(G.x, G.y, indexing="ij")
        u = to_spectral((np.cos(3 * X) * np.exp(-Y**2))[None], G)
        F = evaluate_F(u, NoiseSpec.linear_only(G, 1, Gbar=1.0, a=0.5))
        np.testing.assert_allclose(from_spectral(F[0])[0], math.sqrt(3) * np.cos(3 * X) * np.exp(-Y**2),
                                   atol=1e-13)


class TestNoiseSpec:
    @pytest.mark.parametrize("build", [
        lambda: NoiseSpec(G, 0),
        lambda: NoiseSpec.linear_only(G, 2, Gbar=1.0, a=0.6),
        lambda: NoiseSpec(G, 2, (SeriesTerm(0, 1.0, 0.0),)),
        lambda: NoiseSpec(G, 2, (SeriesTerm((0,), 1.0, 0.0),)),
        lambda: NoiseSpec(G, 2, (SeriesTerm(1, np.ones(5), 0.0),)),
    ])
    def test_invalid(self, build):
        with pytest.raises(ValueError):
            build()

    def test_decay_check(self):
        spec = NoiseSpec(G, 2, (SeriesTerm(3, 1.0, 0.0),), rho=2.0, decay_bound=10.0)
        assert spec.decay_sum() == pytest.approx(2 * 8.0)
        with pytest.raises(ValueError):
            evaluate_F(smooth(0), spec)
        assert spec.decay_sum(1.0) == pytest.approx(2.0)

    def test_mode_profile_and_zero(self):
        spec = NoiseSpec.linear_only(G, 3, Gbar=np.array([1.0, 0.5, 0.25])[:, None, None])
        np.testing.assert_allclose(spec.mode_profile(), [1.0, 0.5, 0.25])
        assert NoiseSpec.zero(G).is_zero() and not spec.is_zero()


class TestIto:
    def test_increment_linear(self):
        u = smooth(4)
        w = sample_increments(0, 3, 2, 0.1)
        inc = ito_increment([u, u * 2.0], w, 1)
        dB = w.increments[1]
        np.testing.assert_allclose(inc.coeffs, (u * (dB[0] + 2 * dB[1])).coeffs, atol=1e-14)
        with pytest.raises(ValueError):
            ito_increment([u, u, u], w, 0)

    def test_hilbert_schmidt_closed_form(self):
        X, Y = np.meshgrid(G.x, G.y, indexing="ij")
        f = to_spectral((np.cos(X) * np.exp(-Y**2))[None], G)
        exact = math.pi * math.sqrt(math.pi / 8)
        assert hilbert_schmidt_sq([f, f * 2.0]) == pytest.approx(5 * exact, rel=1e-8)

    @given(st.integers(0, 10_000))
    def test_hilbert_schmidt_parseval(self, seed):
        f = random_field(G, make_rng(seed), 3)
        vals = from_spectral(f)
        direct = float(np.sum(np.mean(vals**2, axis=1) * G.trapz_weights)) * G.area
        assert hilbert_schmidt_sq([f]) == pytest.approx(direct, rel=1e-12)

    def test_isometry(self):
        r = ito_isometry_check(np.full((50, 2), 0.7), 0.01, 3000, seed=1)
        assert r.rhs == pytest.approx(2 * 50 * 0.49 * 0.01)
        assert abs(r.z) < 4
        assert abs(r.cross_mean) < 4 * r.cross_se

    def test_isometry_single_mode(self):
        r = ito_isometry_check(np.linspace(0, 1, 20)[:, None], 0.05, 2000)
        assert math.isnan(r.cross_mean) and abs(r.z) < 4


class TestOU:
    def test_deterministic_limit(self):
        s = OUState(1.0, 0.5, beta=2.0, alpha1=0.0, U0=1.5)
        assert ou_exact(s, 0.37) == pytest.approx(1.5 * math.exp(1.0))

    @given(st.floats(-5, 5), st.floats(0, 3), st.floats(0, 5), st.floats(0.01, 5), st.floats(-10, 10))
    def test_positive_and_log_affine(self, beta, alpha1, t, U0, B):
        s = OUState.initial(beta, alpha1, U0)
        v = ou_exact(s, B, t)
        assert v > 0
        v2 = ou_exact(s, B + 1.0, t)
        assert math.log(v2) - math.log(v) == pytest.approx(alpha1, abs=1e-9)

    def test_em_step(self):
        s = OUState.initial(1.0, 0.5, 2.0)
        n = ou_em_step(s, 0.1, 0.01)
        assert n.value == pytest.approx(2.0 * (1 + 0.01 + 0.05)) and n.t == pytest.approx(0.01)

    def test_em_deterministic_convergence(self):
        s = OUState.initial(1.0, 0.0, 1.0)
        for _ in range(1000):
            s = ou_em_step(s, 0.0, 1e-3)
        assert s.value == pytest.approx(math.e, rel=1e-3)

    def test_mean(self):
        s = OUState.initial(1.0, 0.5, 1.0)
        B = make_rng(3).standard_normal(20000)
        vals = ou_exact(s, B, 1.0)
        assert abs(vals.mean() - math.e) < 4 * vals.std() / math.sqrt(vals.size)

    def test_invalid(self):
        with pytest.raises(ValueError):
            OUState.initial(1.0, 1.0, 0.0)

    def test_strong_errors_decrease(self):
        e = ou_strong_errors(1.0, 2.0, 1.0, 1.0, [1 / 16, 1 / 64], 300)
        assert e[1] < e[0]


class TestBernoulli:
    def test_constant_state_without_noise(self):
        U = TangentialField.constant(G, 0.4)
        cfg = BernoulliConfig(NoiseSpec.zero(G, 1), lambda t, U: U * 0.0, dt=0.01)
        out = run_bernoulli(U, sample_increments(0, 5, 1, 0.01), cfg)
        np.testing.assert_allclose(out[-1].U.coeffs, U.coeffs, atol=1e-15)
        assert out[-1].t == pytest.approx(0.05)

    def test_reduces_to_ou(self):
        beta, alpha1, dt = 1.0, 0.5, 0.01
        cfg = BernoulliConfig(NoiseSpec.linear_only(G, 1, Gbar=alpha1), lambda t, U: U * (-beta),
                              dt=dt, cutoff=CutoffParams(M=1e12))
        w = sample_increments(2, 20, 1, dt)
        out = run_bernoulli(TangentialField.constant(G, 1.0), w, cfg)
        s = OUState.initial(beta, alpha1, 1.0)
        for db in w.increments[:, 0]:
            s = ou_em_step(s, db, dt)
        assert from_spectral(out[-1].U)[0, 0] == pytest.approx(s.value, rel=1e-12)

    def test_cutoff_freezes(self):
        U = random_tangential(G, make_rng(1, 1), 3, 50.0)
        cfg = BernoulliConfig(NoiseSpec.linear_only(G, 1, Gbar=1.0), lambda t, U: U * 0.0,
                              dt=0.01, cutoff=CutoffParams(M=1e-3))
        out = run_bernoulli(U, sample_increments(0, 3, 1, 0.01), cfg)
        np.testing.assert_array_equal(out[-1].U.coeffs, U.coeffs)

    def test_transport_conserves_mean(self):
        U = random_tangential(G, make_rng(2, 1), 2, 0.1)
        cfg = BernoulliConfig(NoiseSpec.zero(G, 1), lambda t, U: U * 0.0, dt=1e-3)
        out = run_bernoulli(U, sample_increments(0, 50, 1, 1e-3), cfg)
        # u u_x = (u^2/2)_x has zero mean
        assert from_spectral(out[-1].U).mean() == pytest.approx(from_spectral(U).mean(), abs=1e-14)
        assert isinstance(out[-1], OutflowState)
