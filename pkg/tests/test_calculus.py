"""Rough convolution, sewing error, drift convolution and composition."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughpde import rough_path as rp
from roughpde.calculus import (
    Coefficients,
    SewingError,
    compose_G,
    composition_bound_check,
    drift_convolution,
    linear_coefficients,
    local_sewing_error,
    probe_assumptions,
    quadratic_unsafe,
    rough_convolution,
    rough_convolution_limit,
    rough_integral_bound_check,
    sewing_error_probe,
    torus_example,
    zero_coefficients,
)
from roughpde.checks import sewing_scenario, smooth_profile
from roughpde.controlled import ControlledPath, gubinelli_norm, holder_bound_check
from roughpde.spectral import SpaceScale

SC = SpaceScale(1, 6)
FLAT = SpaceScale(1, 0)  # only the constant mode: S(t) = Id
A, G = 0.4, 0.5
seeds = st.integers(0, 10_000)
depths = st.integers(0, 6)


def lift_of_t(n=32, T=1.0):
    return rp.canonical_lift_smooth(lambda t: t, rp.TimeGrid.uniform(T, n), A)


def scalar_path(X, y, yp):
    col = lambda v: np.asarray(v, dtype=complex).reshape(-1, 1)
    return ControlledPath(X.grid, col(y), col(yp), G, A, FLAT)


class TestRoughConvolution:
    @given(depths)
    def test_zero_driver(self, depth):
        X = rp.zero_path(rp.TimeGrid.uniform(1.0, 16), A)
        p = sewing_scenario(X, SC)
        assert not rough_convolution(p, X, refine=depth).any()

    @given(seeds, depths)
    def test_constant_integrand_telescopes(self, seed, depth):
        X = rp.fbm_lift(0.45, 32, seed=seed, alpha=A)
        p = scalar_path(X, np.full(33, 2.0), np.zeros(33))
        for t in (1, 17, 32):
            assert rough_convolution(p, X, t=t, refine=depth)[0] == pytest.approx(2.0 * X.x[t], abs=1e-14)

    @given(depths)
    def test_integral_of_x_dx(self, depth):
        X = lift_of_t(16)
        p = scalar_path(X, X.x, np.ones(17))
        assert rough_convolution(p, X, refine=depth)[0] == pytest.approx(0.5, abs=1e-15)

    def test_zero_time(self):
        X = lift_of_t(4)
        assert not rough_convolution(scalar_path(X, X.x, np.ones(5)), X, t=0).any()

    @given(seeds, st.floats(-3, 3))
    def test_linear(self, seed, lam):
        X = rp.fbm_lift(0.45, 24, seed=seed, alpha=A)
        p, q = sewing_scenario(X, SC), sewing_scenario(X, SC, lam=0.5)
        lhs = rough_convolution(p + lam * q, X, refine=2)
        rhs = rough_convolution(p, X, refine=2) + lam * rough_convolution(q, X, refine=2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_linear_in_first_level_with_frozen_integrand(self):
        X = rp.fbm_lift(0.45, 24, seed=1, alpha=A)
        Y = rp.RoughPath(X.grid, 3.0 * X.x, 9.0 * X.x2_step, A)
        v = smooth_profile(SC)
        y = np.broadcast_to(v, (25,) + SC.shape)
        p = ControlledPath(X.grid, y, np.zeros_like(y), G, A, SC)
        np.testing.assert_allclose(rough_convolution(p, Y, refine=3), 3.0 * rough_convolution(p, X, refine=3),
                                   atol=1e-13)

    def test_cauchy_in_depth(self):
        X = rp.fbm_lift(0.45, 64, seed=2, alpha=A)
        p = sewing_scenario(X, SC)
        vals = [rough_convolution(p, X, refine=d) for d in range(7)]
        diffs = [SC.norm(b - a, G - 2 * A) for a, b in zip(vals, vals[1:])]
        assert all(d2 < d1 for d1, d2 in zip(diffs, diffs[1:]))
        ratios = np.array(diffs[1:]) / np.array(diffs[:-1])
        assert np.all(ratios <= 1.2 * 2 ** -(3 * A - 1))

    def test_limit_converges(self):
        X = rp.fbm_lift(0.45, 32, seed=3, alpha=A)
        lim = rough_convolution_limit(sewing_scenario(X, SC), X, tol=1e-6)
        assert lim.depth >= 1 and lim.differences[-1] <= 1e-6 * max(1.0, SC.norm(lim.value, G - 2 * A))

    def test_limit_failure_names_window(self):
        X = rp.fbm_lift(0.45, 32, seed=3, alpha=A)
        with pytest.raises(SewingError, match=r"\[0, 1\]"):
            rough_convolution_limit(sewing_scenario(X, SC), X, tol=0.0, max_depth=2)


class TestSewing:
    def test_exact_germ_has_zero_error(self):
        X = lift_of_t(32)
        p = scalar_path(X, 1.0 + X.x, np.ones(33))
        assert local_sewing_error(p, X, 3, 29, 0.0) < 1e-14

    @pytest.mark.parametrize("beta", [0.0, A, 2 * A])
    def test_rate_meets_floor(self, beta):
        X = rp.fbm_lift(0.45, 256, seed=0, alpha=A)
        pr = sewing_error_probe(sewing_scenario(X, SC), X, beta)
        assert pr.rate >= 3 * A - beta - 0.1
        assert pr.floor == pytest.approx(3 * A - beta - 0.1) and pr.passed

    @given(st.floats(0.1, 10))
    def test_error_scales_linearly(self, lam):
        X = rp.fbm_lift(0.45, 64, seed=5, alpha=A)
        p = sewing_scenario(X, SC)
        base = local_sewing_error(p, X, 0, 64, A)
        assert local_sewing_error(lam * p, X, 0, 64, A) == pytest.approx(lam * base, rel=1e-10)

    def test_beta_range(self):
        X = lift_of_t(8)
        with pytest.raises(ValueError):
            sewing_error_probe(sewing_scenario(X, SC), X, 3 * A)


class TestDrift:
    def test_zero_drift(self):
        g = rp.TimeGrid.uniform(1.0, 10)
        y = np.ones((11,) + SC.shape, dtype=complex)
        assert not drift_convolution(y, zero_coefficients(SC), g).any()

    @pytest.mark.parametrize("n", [1, 7, 100])
    def test_frozen_unit_mode(self, n):
        sc = SpaceScale(1, 2)
        g = rp.TimeGrid.uniform(1.0, n)
        y = np.broadcast_to(sc.mode(1).coeffs, (n + 1,) + sc.shape)
        co = Coefficients(sc, drift=lambda u: u)
        assert drift_convolution(y, co, g)[3] == pytest.approx(1 - np.exp(-1.0), abs=1e-10)

    def test_first_order_in_step(self):
        sc = SpaceScale(1, 2)
        co = Coefficients(sc, drift=lambda u: u)
        v = sc.mode(1).coeffs

        def value(n):
            g = rp.TimeGrid.uniform(1.0, n)
            return drift_convolution(np.multiply.outer(np.cos(3 * g.points), v), co, g)[3]

        ref = value(2**14)
        errs = [abs(value(n) - ref) for n in (32, 64, 128, 256)]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        np.testing.assert_allclose(ratios, 2.0, rtol=0.1)


class TestComposition:
    def test_identity_composition(self):
        X = rp.fbm_lift(0.45, 8, seed=0, alpha=A)
        p = sewing_scenario(X, SC)
        q = compose_G(p, linear_coefficients(SC, 1.0))
        np.testing.assert_array_equal(q.y, p.y)
        np.testing.assert_array_equal(q.y_prime, p.y)

    def test_half_laplacian_symbol(self):
        X = lift_of_t(4)
        v = SC.mode(2).coeffs
        y = np.broadcast_to(v, (5,) + SC.shape)
        q = compose_G(ControlledPath(X.grid, y, y, G, A, SC), linear_coefficients(SC, 1.0, sigma=0.5))
        np.testing.assert_allclose(q.y, 2 * y)
        np.testing.assert_allclose(q.y_prime, 4 * y)
        assert q.gamma == pytest.approx(G - 0.5)

    def test_zero_path(self):
        X = lift_of_t(4)
        z = np.zeros((5,) + SC.shape)
        co = torus_example(SC)
        q = compose_G(ControlledPath(X.grid, z, z, G, A, SC), co)
        assert not q.y.any() and not q.y_prime.any()
        lhs, rhs = composition_bound_check(ControlledPath(X.grid, z, z, G, A, SC), co, X)
        assert lhs == 0.0 and rhs == 1.0

    def test_affine_in_amplitude(self):
        X = rp.fbm_lift(0.45, 64, seed=4, alpha=A)
        co = torus_example(SC)
        p = sewing_scenario(X, SC)
        p = ControlledPath(X.grid, p.y, co.G(p.y), G, A, SC)
        lams = np.array([1.0, 2.0, 4.0, 8.0])
        out = np.array([composition_bound_check(lam * p, co, X)[0] for lam in lams])
        slope, icpt = np.polyfit(lams, out, 1)
        np.testing.assert_allclose(out, slope * lams + icpt, rtol=0.05)

    def test_output_is_controlled(self):
        X = rp.fbm_lift(0.45, 48, seed=6, alpha=A)
        co = torus_example(SC)
        q = compose_G(sewing_scenario(X, SC), co)
        for lhs, rhs in holder_bound_check(q, X).values():
            assert lhs <= rhs + 1e-10

    def test_rough_integral_bound_stable_in_horizon(self):
        ratios = []
        for T in (0.25, 0.5, 1.0):
            X = rp.fbm_lift(0.45, 64, T, seed=8, alpha=A)
            lhs, rhs = rough_integral_bound_check(sewing_scenario(X, SC), X, 0.1, refine=1)
            ratios.append(lhs / rhs)
        assert np.all(np.isfinite(ratios)) and max(ratios) / min(ratios) < 3.0


class TestCoefficients:
    def test_finite_difference_fallback(self):
        co = quadratic_unsafe(SC)
        bare = Coefficients(SC, diffusion=co.diffusion)
        r = np.random.default_rng(0)
        y, h = SC.random_field(r).coeffs, SC.random_field(r).coeffs
        np.testing.assert_allclose(bare.DG(y, h), co.DG(y, h), atol=1e-5 * SC.norm(y, 0))
        np.testing.assert_allclose(bare.DGG(y), co.DGG(y), atol=1e-4)

    def test_linear_probes(self):
        co = linear_coefficients(SC, 0.7, sigma=0.2, drift=lambda u: 2.0 * u)
        out = probe_assumptions(co, G, A, np.random.default_rng(1))
        assert out["L_F"] <= 2.0 + 1e-12
        assert out["est_g"] == pytest.approx(0.0, abs=1e-12)
        assert all(np.isfinite(v) for v in out.values())

    def test_torus_example_probes_finite(self):
        out = probe_assumptions(torus_example(SC), G, A, np.random.default_rng(2))
        assert all(np.isfinite(v) for v in out.values())
        assert out["L_F"] <= 1.0 + 1e-9

    def test_zero_coefficients(self):
        co = zero_coefficients(SC)
        y = np.ones(SC.shape, dtype=complex)
        assert not co.F(y).any() and not co.G(y).any() and not co.DGG(y).any() and not co.has_noise
