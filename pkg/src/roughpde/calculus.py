"""Rough convolutions, drift convolutions and composition with the diffusion.

All integrals use the mild-equation structure: contributions from an
interval ``[u, v]`` are transported to later times by the (diagonal)
semigroup, so whole trajectories come from the linear recursion

    z_{i+1} = S(h_i) z_i + L_i,

where ``L_i`` is the local contribution of interval ``i`` evaluated at its
right end point.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .controlled import ControlledPath, gubinelli_norm
from .rough_path import RoughPath, TimeGrid
from .spectral import SpaceScale, fractional_symbol, multiply_smooth


class SewingError(RuntimeError):
    """Compensated Riemann sums failed to settle under dyadic refinement."""


def _expand(v: np.ndarray, scale: SpaceScale) -> np.ndarray:
    return np.asarray(v).reshape(np.shape(v) + (1,) * scale.dim)


# --------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Drift ``F`` and diffusion ``G`` acting on batched coefficient arrays.

    ``DG(y, h)`` and the composite ``DG(y)G(y)`` are used as given; when
    missing, ``DG`` falls back to a forward difference with relative step
    ``fd_step``.
    """

    scale: SpaceScale
    drift: Callable[[np.ndarray], np.ndarray] | None = None
    diffusion: Callable[[np.ndarray], np.ndarray] | None = None
    diffusion_derivative: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    diffusion_composite: Callable[[np.ndarray], np.ndarray] | None = None
    delta: float = 0.0
    sigma: float = 0.0
    name: str = "custom"
    safe: bool = True
    fd_step: float = 1e-5

    def F(self, y: np.ndarray) -> np.ndarray:
        return np.zeros_like(y) if self.drift is None else self.drift(y)

    def G(self, y: np.ndarray) -> np.ndarray:
        return np.zeros_like(y) if self.diffusion is None else self.diffusion(y)

    def DG(self, y: np.ndarray, h: np.ndarray) -> np.ndarray:
        if self.diffusion is None:
            return np.zeros_like(h)
        if self.diffusion_derivative is not None:
            return self.diffusion_derivative(y, h)
        ny = self.scale.norm(y, 0.0)
        nh = self.scale.norm(h, 0.0)
        eps = self.fd_step * np.maximum(1.0, ny) / np.where(nh > 0, nh, 1.0)
        eps = _expand(eps, self.scale)
        return (self.G(y + eps * h) - self.G(y)) / eps

    def DGG(self, y: np.ndarray) -> np.ndarray:
        if self.diffusion is None:
            return np.zeros_like(y)
        if self.diffusion_composite is not None:
            return self.diffusion_composite(y)
        return self.DG(y, self.G(y))

    @property
    def has_noise(self) -> bool:
        return self.diffusion is not None


def zero_coefficients(scale: SpaceScale) -> Coefficients:
    return Coefficients(scale, name="zero")


def _multiplier_G(scale: SpaceScale, lam: float, sigma: float, g) -> Callable[[np.ndarray], np.ndarray]:
    symbol = lam * fractional_symbol(scale, sigma)
    if g is None:
        return lambda y: symbol * y
    gc = g.coeffs if hasattr(g, "coeffs") else np.asarray(g)
    return lambda y: multiply_smooth(symbol * y, gc, scale)


def linear_coefficients(
    scale: SpaceScale,
    lam: float = 1.0,
    sigma: float = 0.0,
    g=None,
    drift: Callable | None = None,
    delta: float = 0.0,
    name: str = "linear_g",
) -> Coefficients:
    """``G(y) = lam * g * (-Laplacian)^sigma y`` (``g`` = 1 when omitted)."""
    G = _multiplier_G(scale, lam, sigma, g)
    return Coefficients(
        scale,
        drift=drift,
        diffusion=G,
        diffusion_derivative=lambda y, h: G(h),
        diffusion_composite=lambda y: G(G(y)),
        delta=delta,
        sigma=sigma,
        name=name,
    )


def linear_drift(scale: SpaceScale, factor: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda y: factor * y


def pointwise(scale: SpaceScale, f: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Nemytskii map ``u -> f(u(x))`` through the dealiased collocation grid (real part)."""

    def apply(y):
        vals = scale.to_grid(y).real
        return scale.from_grid(f(vals).astype(complex))

    return apply


def torus_example(
    scale: SpaceScale,
    f: Callable[[np.ndarray], np.ndarray] = np.sin,
    sigma: float = 0.1,
    lam: float = 1.0,
    g_mean: float = 1.0,
    g_amp: float = 0.25,
) -> Coefficients:
    """Drift ``f(y)`` pointwise and ``G(y) = lam * g(x) (-Laplacian)^sigma y``
    with ``g(x) = g_mean + g_amp * cos(x_1)``."""
    g = scale.from_function(lambda *xs: g_mean + g_amp * np.cos(xs[0]))
    return linear_coefficients(scale, lam=lam, sigma=sigma, g=g, drift=pointwise(scale, f), name="torus_example")


def quadratic_unsafe(scale: SpaceScale, lam: float = 1.0) -> Coefficients:
    """``G(y) = lam * y**2``: unbounded derivative, outside the global theory."""
    G = lambda y: lam * multiply_smooth(y, y, scale)
    return Coefficients(
        scale,
        diffusion=G,
        diffusion_derivative=lambda y, h: 2.0 * lam * multiply_smooth(y, h, scale),
        diffusion_composite=lambda y: 2.0 * lam * multiply_smooth(y, G(y), scale),
        name="quadratic_unsafe",
        safe=False,
    )


def probe_assumptions(coeffs: Coefficients, gamma: float, alpha: float, rng: np.random.Generator,
                      probes: int = 32) -> dict[str, float]:
    """Measured constants behind the drift/diffusion assumptions on random probe fields.

    Returns the linear-growth constant of ``F``, the operator bounds of ``DG``
    at the three regularity levels, and the Lipschitz constant of
    ``y -> (DG(y1) - DG(y2)) G(y1)``.
    """
    sc = coeffs.scale
    s, d = coeffs.sigma, coeffs.delta
    u = np.stack([sc.random_field(rng, decay=1.0 + gamma).coeffs * rng.uniform(0.1, 10.0) for _ in range(probes)])
    h = np.stack([sc.random_field(rng, decay=1.0 + gamma).coeffs for _ in range(probes)])
    out = {"L_F": float(np.max(sc.norm(coeffs.F(u), gamma - d) / (1.0 + sc.norm(u, gamma))))}
    for label, theta in (("0", 0.0), ("alpha", alpha), ("2alpha", 2 * alpha)):
        dg = coeffs.DG(u, h)
        out[f"DG_{label}"] = float(np.max(sc.norm(dg, gamma - theta - s) / sc.norm(h, gamma - theta)))
    u2 = u + 0.1 * h
    lip = coeffs.DG(u, coeffs.G(u)) - coeffs.DG(u2, coeffs.G(u))
    out["est_g"] = float(np.max(sc.norm(lip, gamma - 2 * alpha - s) / sc.norm(u - u2, gamma - alpha)))
    return out


# --------------------------------------------------------------------------
# semigroup transport


def decay_factors(grid: TimeGrid, scale: SpaceScale) -> np.ndarray:
    """``exp(-h_i * rate)`` per interval, shape ``(n, *scale.shape)``."""
    return np.exp(-_expand(grid.steps, scale) * scale.rate)


def transport(z0: np.ndarray, decay: np.ndarray, local: np.ndarray | None = None) -> np.ndarray:
    """Run ``z_{i+1} = decay_i * z_i + local_i`` from ``z0``."""
    n = decay.shape[0]
    z = np.empty((n + 1,) + np.shape(z0), dtype=complex)
    z[0] = z0
    if local is None:
        for i in range(n):
            z[i + 1] = decay[i] * z[i]
    else:
        for i in range(n):
            z[i + 1] = decay[i] * z[i] + local[i]
    return z


def _local_rough_weights(X: RoughPath, scale: SpaceScale, refine: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights ``(wA, wB)`` with local contribution ``wA * y_u + wB * y'_u`` per interval.

    Inside each interval the controlled path is extended by its first-order
    expansion ``y_r = y_u + y'_u X_{u,r}``; the piecewise-linear path is
    split into ``2**refine`` pieces and each piece is transported to the
    interval end with the exact semigroup factor.
    """
    h = X.grid.steps
    dx = X.increments
    excess = X.x2_step - 0.5 * dx * dx
    if refine == 0:
        dec = decay_factors(X.grid, scale)
        return dec * _expand(dx, scale), dec * _expand(X.x2_step, scale)
    k = 2**refine
    j = np.arange(k)
    sub = dx / k
    a_coef = np.broadcast_to(sub[:, None], (dx.size, k))
    b_coef = (j[None, :] * sub[:, None]) * sub[:, None] + 0.5 * (sub * sub)[:, None] + (excess / k)[:, None]
    lag = h[:, None] * (1.0 - j[None, :] / k)
    dec = np.exp(-_expand(lag, scale) * scale.rate)
    wA = np.sum(dec * _expand(a_coef, scale), axis=1)
    wB = np.sum(dec * _expand(b_coef, scale), axis=1)
    return wA, wB


def _aligned(p: ControlledPath, X: RoughPath) -> None:
    if not p.grid.same_as(X.grid):
        raise ValueError(f"controlled path grid {p.grid!r} is not aligned with rough path grid {X.grid!r}")


def rough_convolution(p: ControlledPath, X: RoughPath, scale: SpaceScale | None = None, t: int | None = None,
                      refine: int = 0) -> np.ndarray:
    """``int_0^t S(t-r) y_r dX_r`` as a compensated Riemann sum.

    The partition is the grid restricted to ``[0, t]`` with every interval
    split ``2**refine`` times.  Returns the coefficient array at grid index ``t``.
    """
    _aligned(p, X)
    scale = scale or p.scale
    t = p.n if t is None else t
    if t == 0:
        return np.zeros(scale.shape, dtype=complex)
    wA, wB = _local_rough_weights(X.truncate(t), scale, refine)
    local = wA * p.y[:t] + wB * p.y_prime[:t]
    pts = X.grid.points
    lag = _expand(pts[t] - pts[1 : t + 1], scale)
    return np.sum(np.exp(-lag * scale.rate) * local, axis=0)


def rough_convolution_path(p: ControlledPath, X: RoughPath, refine: int = 0) -> np.ndarray:
    """The rough convolution at every grid point, shape ``(n+1, *shape)``."""
    _aligned(p, X)
    sc = p.scale
    wA, wB = _local_rough_weights(X, sc, refine)
    local = wA * p.y[:-1] + wB * p.y_prime[:-1]
    return transport(np.zeros(sc.shape, dtype=complex), decay_factors(X.grid, sc), local)


@dataclass(frozen=True)
class SewingLimit:
    value: np.ndarray
    depth: int
    differences: tuple[float, ...]


def rough_convolution_limit(p: ControlledPath, X: RoughPath, t: int | None = None, tol: float = 1e-9,
                            max_depth: int = 12) -> SewingLimit:
    """Refine dyadically until successive sums agree to ``tol`` (relative, in B_{gamma-2 alpha})."""
    t = p.n if t is None else t
    level = p.gamma - 2 * p.alpha
    prev = rough_convolution(p, X, t=t, refine=0)
    diffs: list[float] = []
    for depth in range(1, max_depth + 1):
        cur = rough_convolution(p, X, t=t, refine=depth)
        d = float(p.scale.norm(cur - prev, level))
        diffs.append(d)
        if d <= tol * max(1.0, float(p.scale.norm(cur, level))):
            return SewingLimit(cur, depth, tuple(diffs))
        if len(diffs) >= 3 and diffs[-1] >= diffs[-2] >= diffs[-3]:
            break
        prev = cur
    raise SewingError(
        f"rough convolution on window [0, {X.grid.points[t]:g}] is not Cauchy under refinement "
        f"(successive differences {['%.3e' % d for d in diffs]})"
    )


# --------------------------------------------------------------------------
# local (sewing) error


@dataclass(frozen=True)
class SewingProbe:
    beta: float
    window_lengths: np.ndarray
    errors: np.ndarray
    rate: float
    floor: float

    @property
    def passed(self) -> bool:
        return self.rate >= self.floor


def local_sewing_error(p: ControlledPath, X: RoughPath, s: int, t: int, beta: float, refine: int = 3) -> float:
    """``|int_s^t S(t-r) y_r dX_r - S(t-s)(y_s X_{s,t} + y'_s X2_{s,t})|`` in B_{gamma-2 alpha+beta}."""
    if not 0 <= s < t <= p.n:
        raise ValueError(f"need 0 <= s < t <= {p.n}, got ({s}, {t})")
    sc = p.scale
    wA, wB = _local_rough_weights(X, sc, refine)
    return _window_errors(p, X, wA, wB, [(s, t)], beta)[0]


def _window_errors(p, X, wA, wB, windows, beta) -> list[float]:
    sc = p.scale
    pts = X.grid.points
    level = p.gamma - 2 * p.alpha + beta
    local = wA * p.y[:-1] + wB * p.y_prime[:-1]
    out = []
    for s, t in windows:
        lag = _expand(pts[t] - pts[s + 1 : t + 1], sc)
        integral = np.sum(np.exp(-lag * sc.rate) * local[s:t], axis=0)
        x1 = X.x[t] - X.x[s]
        x2 = X.second_order_from(s)[t - s]
        germ = np.exp(-(pts[t] - pts[s]) * sc.rate) * (p.y[s] * x1 + p.y_prime[s] * x2)
        out.append(float(sc.norm(integral - germ, level)))
    return out


def sewing_error_probe(p: ControlledPath, X: RoughPath, beta: float, window_steps=(1, 2, 4, 8, 16, 32, 64),
                       refine: int = 3) -> SewingProbe:
    """Fit the exponent of the local sewing error against window length.

    For each window size the error is averaged over all disjoint windows of
    that many grid steps; the rate is the least-squares slope in log-log.
    """
    _aligned(p, X)
    a = p.alpha
    if not 0 <= beta < 3 * a:
        raise ValueError(f"beta must lie in [0, 3 alpha), got {beta}")
    wA, wB = _local_rough_weights(X, p.scale, refine)
    lengths, errs = [], []
    for m in window_steps:
        wins = [(s, s + m) for s in range(0, p.n - m + 1, m)]
        if not wins:
            continue
        e = _window_errors(p, X, wA, wB, wins, beta)
        lengths.append(float(np.mean([X.grid.points[t] - X.grid.points[s] for s, t in wins])))
        errs.append(float(np.mean(e)))
    lengths, errs = np.array(lengths), np.array(errs)
    rate = float(np.polyfit(np.log(lengths), np.log(errs), 1)[0]) if np.all(errs > 0) and len(errs) > 1 else np.inf
    return SewingProbe(beta, lengths, errs, rate, 3 * a - beta - 0.1)


# --------------------------------------------------------------------------
# drift


def _phi(grid: TimeGrid, scale: SpaceScale) -> np.ndarray:
    """``int_0^h e^{-a r} dr`` per interval and mode."""
    a = scale.rate
    h = _expand(grid.steps, scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(-h * a) / a
    return np.where(a > 0, out, h * np.ones_like(a))


def drift_local(y: np.ndarray, coeffs: Coefficients, grid: TimeGrid) -> np.ndarray:
    """Left-point drift contributions at interval ends: ``phi(h_i) F(y_i)``."""
    return _phi(grid, coeffs.scale) * coeffs.F(y[:-1])


def drift_convolution(y: np.ndarray, coeffs: Coefficients, grid: TimeGrid, t: int | None = None) -> np.ndarray:
    """``int_0^t S(t-s) F(y_s) ds`` with ``y`` frozen at left points and exact
    per-mode integration of the semigroup kernel."""
    sc = coeffs.scale
    t = grid.n if t is None else t
    if t == 0:
        return np.zeros(sc.shape, dtype=complex)
    local = drift_local(y[: t + 1], coeffs, grid.truncate(t))
    lag = _expand(grid.points[t] - grid.points[1 : t + 1], sc)
    return np.sum(np.exp(-lag * sc.rate) * local, axis=0)


def drift_convolution_path(y: np.ndarray, coeffs: Coefficients, grid: TimeGrid) -> np.ndarray:
    sc = coeffs.scale
    return transport(np.zeros(sc.shape, dtype=complex), decay_factors(grid, sc), drift_local(y, coeffs, grid))


# --------------------------------------------------------------------------
# composition


def compose_G(p: ControlledPath, coeffs: Coefficients) -> ControlledPath:
    """``(G(y), DG(y) G(y))`` at regularity ``gamma - sigma``."""
    return ControlledPath(p.grid, coeffs.G(p.y), coeffs.DGG(p.y), p.gamma - coeffs.sigma, p.alpha, p.scale)


def composition_bound_check(p: ControlledPath, coeffs: Coefficients, X: RoughPath, stride: int = 1) -> tuple[float, float]:
    """``(||(G(y), DG(y)G(y))||_{gamma-sigma}, 1 + ||(y, y')||_gamma)``."""
    lhs = gubinelli_norm(compose_G(p, coeffs), X, stride).total
    return lhs, 1.0 + gubinelli_norm(p, X, stride).total


def rough_integral_bound_check(p: ControlledPath, X: RoughPath, sigma: float, refine: int = 0,
                               stride: int = 1) -> tuple[float, float]:
    """Norm of ``(int S y dX, y)`` at ``gamma + sigma`` against
    ``|y_0|_gamma + |y'_0|_{gamma-alpha} + T^(alpha-sigma) ||(y, y')||_gamma``."""
    sc = p.scale
    z = rough_convolution_path(p, X, refine)
    zp = ControlledPath(p.grid, z, p.y, p.gamma + sigma, p.alpha, sc)
    lhs = gubinelli_norm(zp, X, stride).total
    T = p.grid.horizon
    rhs = (float(sc.norm(p.y[0], p.gamma)) + float(sc.norm(p.y_prime[0], p.gamma - p.alpha))
           + T ** (p.alpha - sigma) * gubinelli_norm(p, X, stride).total)
    return lhs, rhs
