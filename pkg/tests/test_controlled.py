"""Controlled paths: remainders, the five-term norm and the derived Hoelder bound."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughpde import rough_path as rp
from roughpde.controlled import (
    ControlledPath,
    ControlledPathError,
    GubNormBreakdown,
    gubinelli_norm,
    holder_bound_check,
    remainder,
    subsample_rough_path,
)
from roughpde.spectral import SpaceScale

SC = SpaceScale(1, 4)
G, A = 0.5, 0.4
seeds = st.integers(0, 10_000)


def lift_of_t(n=32):
    return rp.canonical_lift_smooth(lambda t: t, rp.TimeGrid.uniform(1.0, n), A)


def along(values, v):
    return np.multiply.outer(np.asarray(values, dtype=complex), v)


def random_pair(seed, X):
    r = np.random.default_rng(seed)
    v, w = SC.random_field(r).coeffs, SC.random_field(r).coeffs
    y = along(np.sin(X.x + X.grid.points), v) + along(X.grid.points**2, w)
    yp = along(np.cos(X.grid.points), v)
    return ControlledPath(X.grid, y, yp, G, A, SC)


class TestRemainder:
    def test_diagonal_is_zero(self):
        X = rp.fbm_lift(0.45, 16, seed=1, alpha=A)
        p = random_pair(0, X)
        assert not remainder(p, X, 5, 5).coeffs.any()

    def test_exactly_controlled(self):
        X = rp.fbm_lift(0.45, 16, seed=2, alpha=A)
        v = SC.mode(1).coeffs
        p = ControlledPath(X.grid, along(X.x, v), along(np.ones(17), v), G, A, SC)
        for s, t in [(0, 16), (3, 9), (7, 8)]:
            assert np.max(np.abs(remainder(p, X, s, t).coeffs)) < 1e-14

    def test_drift_only(self):
        X = lift_of_t(8)
        v = SC.mode(2, 0.5).coeffs
        p = ControlledPath(X.grid, along(X.grid.points, v), np.zeros((9,) + SC.shape), G, A, SC)
        np.testing.assert_allclose(remainder(p, X, 2, 6).coeffs, 0.5 * v, atol=1e-15)

    def test_misaligned(self):
        X = lift_of_t(8)
        p = random_pair(0, lift_of_t(16))
        with pytest.raises(ControlledPathError):
            remainder(p, X, 0, 1)

    def test_ordering(self):
        X = lift_of_t(8)
        with pytest.raises(ControlledPathError):
            remainder(random_pair(0, X), X, 5, 2)

    @given(seeds, seeds)
    def test_bilinear(self, a, b):
        X = rp.fbm_lift(0.45, 12, seed=a, alpha=A)
        p, q = random_pair(a, X), random_pair(b, X)
        lhs = remainder(p + q, X, 2, 11).coeffs
        rhs = remainder(p, X, 2, 11).coeffs + remainder(q, X, 2, 11).coeffs
        np.testing.assert_allclose(lhs, rhs, atol=1e-13)

    def test_shape_validation(self):
        X = lift_of_t(4)
        with pytest.raises(ControlledPathError):
            ControlledPath(X.grid, np.zeros((4,) + SC.shape), np.zeros((5,) + SC.shape), G, A, SC)


class TestGubinelliNorm:
    def test_zero(self):
        X = lift_of_t(8)
        z = np.zeros((9,) + SC.shape)
        assert gubinelli_norm(ControlledPath(X.grid, z, z, G, A, SC), X).total == 0.0

    def test_constant(self):
        X = rp.fbm_lift(0.4, 16, seed=0, alpha=0.39)
        v = SC.random_field(np.random.default_rng(0)).coeffs
        p = ControlledPath(X.grid, along(np.ones(17), v), np.zeros((17,) + SC.shape), G, 0.39, SC)
        b = gubinelli_norm(p, X)
        assert b.total == pytest.approx(SC.norm(v, G), rel=1e-12)
        assert b.hol_R == b.hol2_R == b.hol_yp == b.sup_yp == 0.0

    def test_breakdown_total_and_csv(self):
        b = GubNormBreakdown(1.0, 2.0, 3.0, 4.0, 5.0)
        assert b.total == 15.0
        assert b.csv_header() == "sup_y,sup_yp,hol_yp,hol_R,hol2_R,total"
        assert b.csv_row().split(",")[-1] == "15"

    def test_initial_data_constant_is_stable(self):
        y0 = SC.mode(2).coeffs
        ratios = []
        for n in (64, 128, 256):
            X = rp.fbm_lift(0.45, n, seed=5, alpha=A)
            t = X.grid.points
            y = np.exp(-np.multiply.outer(t, SC.rate)) * y0
            p = ControlledPath(X.grid, y, np.zeros_like(y), G, A, SC)
            ratios.append(gubinelli_norm(p, X).total / SC.norm(y0, G))
        assert np.all(np.isfinite(ratios))
        assert max(ratios) / min(ratios) < 1.05

    @given(seeds, st.floats(-4, 4))
    def test_homogeneous(self, seed, lam):
        X = rp.fbm_lift(0.45, 12, seed=seed, alpha=A)
        p = random_pair(seed, X)
        assert gubinelli_norm(lam * p, X).total == pytest.approx(abs(lam) * gubinelli_norm(p, X).total, rel=1e-12)

    @given(seeds, seeds)
    def test_triangle(self, a, b):
        X = rp.fbm_lift(0.45, 12, seed=a, alpha=A)
        p, q = random_pair(a, X), random_pair(b, X)
        n = lambda r: gubinelli_norm(r, X).total
        assert n(p + q) <= n(p) + n(q) + 1e-12

    def test_components_grow_under_refinement(self):
        f = lambda t: np.sin(4 * t)
        v = SC.mode(1).coeffs
        prev = None
        for n in (8, 16, 32, 64):
            X = rp.canonical_lift_smooth(f, rp.TimeGrid.uniform(1.0, n), A)
            t = X.grid.points
            p = ControlledPath(X.grid, along(np.cos(3 * t) + t, v), along(np.sin(t), v), G, A, SC)
            b = gubinelli_norm(p, X)
            cur = np.array([b.sup_y, b.sup_yp, b.hol_yp, b.hol_R, b.hol2_R])
            if prev is not None:
                assert np.all(cur >= prev - 1e-12)
            prev = cur

    def test_stride_coarsens_only_holder_terms(self):
        X = rp.fbm_lift(0.45, 64, seed=3, alpha=A)
        p = random_pair(3, X)
        full, coarse = gubinelli_norm(p, X), gubinelli_norm(p, X, stride=4)
        assert coarse.sup_y == full.sup_y and coarse.sup_yp == full.sup_yp
        assert coarse.hol_R <= full.hol_R + 1e-12


class TestHolderBound:
    def test_exactly_controlled(self):
        X = rp.fbm_lift(0.45, 32, seed=4, alpha=A)
        v = SC.mode(1).coeffs
        p = ControlledPath(X.grid, along(X.x, v), along(np.ones(33), v), G, A, SC)
        for lhs, rhs in holder_bound_check(p, X).values():
            assert lhs <= rhs + 1e-10

    def test_zero_derivative_is_equality(self):
        X = lift_of_t(16)
        v = SC.mode(3).coeffs
        p = ControlledPath(X.grid, along(X.grid.points**2, v), np.zeros((17,) + SC.shape), G, A, SC)
        for lhs, rhs in holder_bound_check(p, X).values():
            assert lhs == pytest.approx(rhs, rel=1e-12)

    @given(seeds)
    def test_random_smooth_over_fbm(self, seed):
        X = rp.fbm_lift(0.45, 24, seed=seed, alpha=A)
        for lhs, rhs in holder_bound_check(random_pair(seed, X), X).values():
            assert lhs <= rhs + 1e-10


@given(seeds, st.integers(2, 7))
def test_subsampled_rough_path_is_consistent(seed, stride):
    X = rp.fbm_lift(0.45, 30, seed=seed, alpha=A)
    Y = subsample_rough_path(X, stride)
    idx = list(range(0, 31, stride)) + ([30] if 30 % stride else [])
    for j, i in enumerate(idx):
        assert rp.chen_reconstruct(Y, 0, j) == pytest.approx(rp.chen_reconstruct(X, 0, i), abs=1e-14)
