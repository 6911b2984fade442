import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from stochprandtl.fields import Grid, TangentialField, conormal_Z, from_spectral, normal_derivative, to_spectral
from stochprandtl.harness.corpus import random_field
from stochprandtl.noise import make_rng
from stochprandtl.norms import (
    EnergyTrace, NormSpec, analytic_sobolev_norm, anisotropic_norm, dissipation_sq, energy_append,
    gevrey_norm, hs_conormal_norm, hx_norm, parabolic_energy_update, radius_norm, tilde_norm,
    weight_profile, xs_norm, xs_norm_sq,
)

G = Grid(Nx=16, Ny=64, Ly=6.0)
seeds = st.integers(0, 2**31 - 1)


def rand(seed, grid=G, kmax=3, amp=1.0):
    return random_field(grid, make_rng(seed, 11), kmax, amp)


def gauss_mode(grid):
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    return to_spectral((np.cos(X) * np.exp(-Y**2))[None], grid)


class TestNormSpec:
    @pytest.mark.parametrize("kw", [dict(s=-1), dict(s=1.5), dict(gamma=0.0), dict(sigma=-0.1),
                                    dict(weight_kind="box"), dict(gevrey_p=3)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            NormSpec(**kw)

    def test_with(self):
        assert NormSpec(2).with_(sigma=0.3).sigma == 0.3

    def test_weight_guard(self):
        with pytest.raises(OverflowError):
            weight_profile(Grid(Ny=16, Ly=40.0), 1.0)
        np.testing.assert_allclose(weight_profile(G, 2.0, "polynomial"), (1 + G.y) ** 2)


class TestConormalNorm:
    def test_zero(self):
        z = rand(0) * 0.0
        assert hs_conormal_norm(z, NormSpec(3)) == 0.0
        assert xs_norm(z, NormSpec(3)) == 0.0

    def test_gaussian_closed_form(self):
        # ||e^{y^2/4} cos(x) e^{-y^2}||^2 = pi * int_0^inf e^{-3y^2/2} dy
        g = Grid(Nx=8, Ny=257, Ly=8.0)
        val = hs_conormal_norm(gauss_mode(g), NormSpec(0, 0.25))
        exact = math.sqrt(math.pi * 0.5 * math.sqrt(2 * math.pi / 3))
        assert val == pytest.approx(exact, rel=1e-6)

    def test_xs_gaussian_oracle(self):
        # s = 1: j=0 with |k|<=1 (two terms), j=1 (y f'), plus ||f'||^2
        g = Grid(Nx=8, Ny=257, Ly=8.0)
        w = lambda y: math.exp(0.5 * y * y)  # squared weight, gamma = 1/4
        f = lambda y: math.exp(-y * y)
        fp = lambda y: -2 * y * math.exp(-y * y)
        integrand = lambda y: w(y) * (2 * f(y) ** 2 + (y * fp(y)) ** 2 + fp(y) ** 2)
        exact = math.pi * quad(integrand, 0, 8.0, epsabs=1e-14)[0]
        assert xs_norm_sq(gauss_mode(g), NormSpec(1, 0.25)) == pytest.approx(exact, rel=1e-6)

    @given(seeds)
    def test_xs_definitional_identity(self, seed):
        f = rand(seed)
        spec = NormSpec(3, 0.25)
        dy = normal_derivative(f, 1, accuracy=G.conormal_order)
        lhs = xs_norm_sq(f, spec) - hs_conormal_norm(f, spec) ** 2
        rhs = hs_conormal_norm(dy, spec.with_(s=2)) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-10)

    @given(seeds)
    def test_monotone_in_s(self, seed):
        f = rand(seed)
        vals = [hs_conormal_norm(f, NormSpec(s, 0.25)) for s in range(4)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    @given(seeds, st.one_of(st.just(0.0), st.floats(1e-6, 5), st.floats(-5, -1e-6)))
    def test_homogeneity(self, seed, c):
        f = rand(seed)
        spec = NormSpec(2, 0.25, 0.1)
        for norm in (hs_conormal_norm, xs_norm, analytic_sobolev_norm, gevrey_norm, tilde_norm):
            assert norm(f * c, spec) == pytest.approx(abs(c) * norm(f, spec), rel=1e-12)

    @given(seeds)
    def test_triangle(self, seed):
        f, g = rand(seed), rand(seed + 1)
        spec = NormSpec(3, 0.25, 0.1)
        for norm in (hs_conormal_norm, xs_norm, analytic_sobolev_norm):
            assert norm(f + g, spec) <= norm(f, spec) + norm(g, spec) + 1e-10

    def test_parseval_limit(self):
        f = rand(4)
        vals = from_spectral(f)
        direct = G.Lx / G.Nx * float(np.sum(vals**2 * G.trapz_weights))
        assert hs_conormal_norm(f, NormSpec(0, 1e-15)) ** 2 == pytest.approx(direct, rel=1e-10)

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            hs_conormal_norm(rand(0, Grid(Nx=8, Ny=16)), NormSpec(8))
        with pytest.raises(ValueError):
            xs_norm(rand(0), NormSpec(0))


class TestAnisotropic:
    def test_zero(self):
        assert anisotropic_norm(rand(0) * 0.0, 2, 2, 0.25) == 0.0

    def test_j0_column_is_tangential_sobolev(self):
        f = rand(3)
        w = weight_profile(G, 0.25)
        km = G.k1_deriv
        sym = sum(km ** (2 * m) for m in range(3))
        direct = G.Lx * np.sum(sym * np.sum(np.abs(f.coeffs[0]) ** 2 * (G.trapz_weights * w**2), axis=-1))
        assert anisotropic_norm(f, 2, 0, 0.25) ** 2 == pytest.approx(direct, rel=1e-12)

    @given(seeds, st.integers(1, 4))
    def test_equivalence(self, seed, s):
        f = rand(seed)
        hs2 = hs_conormal_norm(f, NormSpec(s, 0.25)) ** 2
        total = sum(anisotropic_norm(f, s1, s - s1, 0.25) ** 2 for s1 in range(s + 1))
        assert hs2 * (1 - 1e-12) <= total <= (s + 1) * hs2 * (1 + 1e-12)

    def test_negative(self):
        with pytest.raises(ValueError):
            anisotropic_norm(rand(0), -1, 2, 0.25)


class TestRadiusNorms:
    @given(seeds)
    def test_sigma_zero_reduces(self, seed):
        f = rand(seed)
        spec = NormSpec(2, 0.25, 0.0)
        assert analytic_sobolev_norm(f, spec) == xs_norm(f, spec)

    @given(seeds, st.floats(0, 0.5), st.floats(0, 0.5))
    def test_monotone_in_sigma(self, seed, a, b):
        f = rand(seed)
        lo, hi = sorted((a, b))
        spec = NormSpec(2, 0.25)
        assert analytic_sobolev_norm(f, spec.with_(sigma=lo)) <= \
            analytic_sobolev_norm(f, spec.with_(sigma=hi)) * (1 + 1e-14)

    def test_single_mode_scaling(self):
        X, Y = np.meshgrid(G.x, G.y, indexing="ij")
        f = to_spectral((np.cos(3 * X) * np.exp(-Y**2))[None], G)
        spec = NormSpec(2, 0.25)
        base = xs_norm_sq(f, spec)
        assert analytic_sobolev_norm(f, spec.with_(sigma=0.2)) ** 2 == pytest.approx(base * math.exp(1.2), rel=1e-12)
        assert gevrey_norm(f, spec.with_(sigma=0.2)) ** 2 == pytest.approx(base * math.exp(0.4 * math.sqrt(3)), rel=1e-12)
        assert radius_norm(f, spec.with_(sigma=0.2, gevrey_p=2)) == gevrey_norm(f, spec.with_(sigma=0.2))


class TestHx:
    def test_zero_and_constant(self):
        assert hx_norm(TangentialField.zeros(G), 4, 0.3) == 0.0
        U = TangentialField.constant(G, -1.5)
        assert hx_norm(U, 4, 0.7) == pytest.approx(1.5 * math.sqrt(G.Lx), rel=1e-14)

    def test_single_mode_oracle(self):
        c = np.zeros(G.tangential_shape, dtype=complex)
        c[0, 2] = c[0, -2] = 0.25
        U = TangentialField(G, c)
        sigma, s = 0.3, 3
        direct = math.sqrt(G.Lx * 2 * 0.25**2 * math.exp(2 * sigma * 2) * (1 + 4) ** s)
        assert hx_norm(U, s, sigma) == pytest.approx(direct, rel=1e-14)


class TestTilde:
    def test_zero(self):
        assert tilde_norm(rand(0) * 0.0, NormSpec(2)) == 0.0

    def test_direct_summation(self):
        g = Grid(Nx=8, Ny=32, Ly=4.0)
        f = rand(6, g, kmax=2)
        spec = NormSpec(2, 0.25)
        wsq = (g.y * np.exp(0.25 * g.y**2)) ** 2 * g.trapz_weights
        total = 0.0
        for s_, h in ((2, f), (1, normal_derivative(f, 1, accuracy=g.conormal_order))):
            for j in range(s_ + 1):
                cj = conormal_Z(h, j).coeffs[0]
                for m in range(s_ - j + 1):
                    total += g.Lx * np.sum(g.k1_deriv ** (2 * m) * (np.abs(cj) ** 2 @ wsq))
        assert tilde_norm(f, spec) ** 2 == pytest.approx(total, rel=1e-12)

    def test_wall_row_has_no_weight(self):
        g = Grid(Nx=8, Ny=32, Ly=4.0)
        f = rand(1, g)
        c = f.coeffs.copy()
        c[..., 0] += 3.0
        # only the j=0, undifferentiated term sees row 0 directly, and its weight y vanishes there
        spec = NormSpec(1, 0.25)
        a = xs_norm_sq(f.replace(c), spec, extra_y=True) - xs_norm_sq(f, spec, extra_y=True)
        b = xs_norm_sq(f.replace(c), spec) - xs_norm_sq(f, spec)
        assert abs(a) < abs(b)


class TestEnergyTrace:
    def test_first_sample(self):
        tr = energy_append(EnergyTrace(), 0.0, 2.0, 5.0)
        assert tr.sup_norm_sq == (2.0,) and tr.dissipation_integral == (0.0,)
        assert tr.energy == pytest.approx(math.sqrt(2.0))

    def test_constant_field(self):
        tr = EnergyTrace()
        for k in range(5):
            tr = energy_append(tr, 0.1 * k, 1.0, 3.0)
        np.testing.assert_allclose(tr.dissipation_integral, 0.3 * np.arange(5), atol=1e-15)
        assert set(tr.sup_norm_sq) == {1.0}

    def test_time_must_increase(self):
        tr = energy_append(EnergyTrace(), 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            energy_append(tr, 0.0, 1.0, 1.0)

    def test_dense_quadrature_oracle(self):
        # f(t) = e^{-t} f0: integral of the rate is D0 (1 - e^{-2T}) / 2
        f0 = rand(2, Grid(Nx=8, Ny=32, Ly=4.0), kmax=2)
        spec = NormSpec(1, 0.25)
        D0 = dissipation_sq(f0, spec)
        errs = []
        for n in (20, 40, 80):
            tr = EnergyTrace()
            for k in range(n + 1):
                t = k / n
                tr = parabolic_energy_update(tr, t, f0 * math.exp(-t), spec)
            errs.append(abs(tr.dissipation_integral[-1] - D0 * (1 - math.exp(-2)) / 2))
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
        assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)

    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=30))
    def test_components_nondecreasing(self, samples):
        tr = EnergyTrace()
        for k, (nsq, rate) in enumerate(samples):
            tr = energy_append(tr, 0.01 * k, nsq, rate)
        assert all(np.diff(tr.sup_norm_sq) >= 0)
        assert all(np.diff(tr.dissipation_integral) >= 0)

    def test_csv(self):
        tr = energy_append(energy_append(EnergyTrace(), 0.0, 1.0, 2.0), 0.5, 0.5, 1.0)
        lines = tr.to_csv().splitlines()
        assert lines[0] == "t,sup_sq,dissipation_integral,energy"
        assert [float(v) for v in lines[2].split(",")] == [0.5, 1.0, 1.0, math.sqrt(2.0)]
