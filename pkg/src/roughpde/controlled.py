"""Controlled rough paths over the spectral scale and their Gubinelli norm."""
from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .rough_path import RoughPath, TimeGrid, holder_norm
from .spectral import SpaceScale, SpectralField


class ControlledPathError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ControlledPath:
    """Pair ``(y, y')`` sampled on ``grid``; arrays have shape ``(n+1, *scale.shape)``.

    The remainder is never stored, see :func:`remainder`.
    """

    grid: TimeGrid
    y: np.ndarray
    y_prime: np.ndarray
    gamma: float
    alpha: float
    scale: SpaceScale

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        yp = np.asarray(self.y_prime, dtype=complex)
        want = (self.grid.n + 1,) + self.scale.shape
        if y.shape != want or yp.shape != want:
            raise ControlledPathError(f"expected arrays of shape {want}, got {y.shape} and {yp.shape}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_prime", yp)

    @property
    def n(self) -> int:
        return self.grid.n

    def field(self, i: int) -> SpectralField:
        return self.scale.field(self.y[i])

    def derivative(self, i: int) -> SpectralField:
        return self.scale.field(self.y_prime[i])

    def _like(self, y, yp, gamma=None) -> "ControlledPath":
        return ControlledPath(self.grid, y, yp, self.gamma if gamma is None else gamma, self.alpha, self.scale)

    def __add__(self, other: "ControlledPath") -> "ControlledPath":
        return self._like(self.y + other.y, self.y_prime + other.y_prime)

    def __sub__(self, other: "ControlledPath") -> "ControlledPath":
        return self._like(self.y - other.y, self.y_prime - other.y_prime)

    def __mul__(self, a: float) -> "ControlledPath":
        return self._like(a * self.y, a * self.y_prime)

    __rmul__ = __mul__

    def at_gamma(self, gamma: float) -> "ControlledPath":
        return self._like(self.y, self.y_prime, gamma)

    def subsample(self, stride: int) -> "ControlledPath":
        idx = _stride_index(self.n, stride)
        return ControlledPath(TimeGrid(self.grid.points[idx]), self.y[idx], self.y_prime[idx],
                              self.gamma, self.alpha, self.scale)

    @classmethod
    def from_fields(cls, grid, ys, yps, gamma, alpha, scale) -> "ControlledPath":
        stack = lambda fs: np.stack([f.coeffs if isinstance(f, SpectralField) else f for f in fs])
        return cls(grid, stack(ys), stack(yps), gamma, alpha, scale)


def _stride_index(n: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise ControlledPathError(f"stride must be >= 1, got {stride}")
    idx = np.arange(0, n + 1, stride)
    if idx[-1] != n:
        idx = np.append(idx, n)
    return idx


def subsample_rough_path(X: RoughPath, stride: int) -> RoughPath:
    """Coarser rough path on every ``stride``-th point (Chen-consistent)."""
    if stride == 1:
        return X
    idx = _stride_index(X.n, stride)
    a = X._area_cumsum()
    x = X.x[idx]
    x2 = a[idx[1:]] - a[idx[:-1]] - x[:-1] * (x[1:] - x[:-1])
    return RoughPath(TimeGrid(X.grid.points[idx]), x, x2, X.alpha)


def _aligned(p: ControlledPath, X: RoughPath) -> None:
    if not p.grid.same_as(X.grid):
        raise ControlledPathError(f"controlled path grid {p.grid!r} is not aligned with rough path grid {X.grid!r}")


def remainder(p: ControlledPath, X: RoughPath, s: int, t: int) -> SpectralField:
    """``R_{s,t} = y_t - y_s - y'_s X_{s,t}``."""
    _aligned(p, X)
    if not 0 <= s <= t <= p.n:
        raise ControlledPathError(f"need 0 <= s <= t <= {p.n}, got ({s}, {t})")
    return p.scale.field(p.y[t] - p.y[s] - p.y_prime[s] * (X.x[t] - X.x[s]))


def remainder_holder(p: ControlledPath, X: RoughPath, specs) -> list[float]:
    """Two-parameter sups ``|R_{s,t}|_g / (t-s)^e`` for each ``(g, e)`` in ``specs``."""
    _aligned(p, X)
    t = p.grid.points
    ws = [p.scale.weight(g) for g, _ in specs]
    axes = tuple(range(1, 1 + p.scale.dim))
    best = [0.0] * len(specs)
    for s in range(p.n):
        r = p.y[s + 1 :] - p.y[s] - p.y_prime[s] * (X.x[s + 1 :] - X.x[s]).reshape((-1,) + (1,) * p.scale.dim)
        sq = r.real**2 + r.imag**2
        dt = t[s + 1 :] - t[s]
        for j, (w, (_, e)) in enumerate(zip(ws, specs)):
            val = float(np.max(np.sqrt(np.sum(w * sq, axis=axes)) / dt**e))
            if val > best[j]:
                best[j] = val
    return best


@dataclass(frozen=True)
class GubNormBreakdown:
    sup_y: float
    sup_yp: float
    hol_yp: float
    hol_R: float
    hol2_R: float

    @property
    def total(self) -> float:
        return self.sup_y + self.sup_yp + self.hol_yp + self.hol_R + self.hol2_R

    def csv_header(self) -> str:
        return ",".join([f.name for f in fields(self)] + ["total"])

    def csv_row(self) -> str:
        return ",".join(f"{v:.17g}" for v in astuple(self) + (self.total,))


def gubinelli_norm(p: ControlledPath, X: RoughPath, stride: int = 1) -> GubNormBreakdown:
    """The five-term controlled-path norm at regularity ``p.gamma``.

    ``stride > 1`` evaluates the Hoelder parts on every ``stride``-th grid point
    only (Chen-consistent coarsening of ``X``); sup terms always use all points.
    """
    _aligned(p, X)
    g, a, sc = p.gamma, p.alpha, p.scale
    sup_y = float(np.max(sc.norm(p.y, g)))
    sup_yp = float(np.max(sc.norm(p.y_prime, g - a)))
    q, Xq = (p.subsample(stride), subsample_rough_path(X, stride)) if stride > 1 else (p, X)
    hol_yp = holder_norm(q.y_prime, q.grid, a, weights=sc.weight(g - 2 * a))
    hol_r, hol2_r = remainder_holder(q, Xq, [(g - a, a), (g - 2 * a, 2 * a)])
    return GubNormBreakdown(sup_y, sup_yp, hol_yp, hol_r, hol2_r)


def holder_bound_check(p: ControlledPath, X: RoughPath) -> dict[float, tuple[float, float]]:
    """Both sides of ``||y||_{a,g-th} <= ||y'||_{inf,g-th} ||X||_a + ||R||_{a,g-th}`` for th in {a, 2a}."""
    _aligned(p, X)
    g, a, sc = p.gamma, p.alpha, p.scale
    x_hol = holder_norm(X.x, X.grid, a)
    out = {}
    for theta in (a, 2 * a):
        lhs = holder_norm(p.y, p.grid, a, weights=sc.weight(g - theta))
        (r,) = remainder_holder(p, X, [(g - theta, a)])
        rhs = float(np.max(sc.norm(p.y_prime, g - theta))) * x_hol + r
        out[theta] = (lhs, rhs)
    return out


def sup_norm(values: np.ndarray, scale: SpaceScale, gamma: float) -> float:
    return float(np.max(scale.norm(values, gamma)))

