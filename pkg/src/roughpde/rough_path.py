"""Scalar alpha-Hoelder rough paths sampled on finite time grids.

A :class:`RoughPath` stores the path values ``x`` at the grid points and the
second-order increments ``x2_step`` over consecutive grid intervals only.  Any
second-order increment over a pair of grid points is recovered through Chen's
relation, so the stored data is O(n) while every pair is available exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

GENERATOR_TAG = "pcg64-daviesharte-v1"

ALPHA_MIN = 1.0 / 3.0
ALPHA_MAX = 0.5


class RoughPathError(ValueError):
    """Invalid rough path input (grid, exponent, or index)."""


class CovarianceFactorizationError(RuntimeError):
    def __init__(self, hurst: float, n: int, detail: str = ""):
        self.hurst = hurst
        self.n = n
        super().__init__(f"fBm covariance factorization failed for H={hurst}, n={n}. {detail}".strip())


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing times ``0 = t_0 < ... < t_n``.

    ``steps`` is carried separately from ``points`` so that shifted and
    refined grids reuse bit-identical step sizes.
    """

    points: np.ndarray
    steps: np.ndarray

    def __init__(self, points, steps=None):
        pts = np.asarray(points, dtype=float).copy()
        if pts.ndim != 1 or pts.size < 2:
            raise RoughPathError("a time grid needs at least two points")
        if pts[0] != 0.0:
            raise RoughPathError(f"a time grid must start at 0, got {pts[0]!r}")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise RoughPathError("grid points must be finite and strictly increasing")
        if steps is None:
            stp = np.diff(pts)
        else:
            stp = np.asarray(steps, dtype=float).copy()
            if stp.shape != (pts.size - 1,) or np.any(stp <= 0):
                raise RoughPathError("steps must be positive, one per interval")
        pts.setflags(write=False)
        stp.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "steps", stp)

    @classmethod
    def uniform(cls, T: float, n: int) -> "TimeGrid":
        if n < 1 or not T > 0:
            raise RoughPathError(f"need n >= 1 and T > 0, got n={n}, T={T}")
        h = T / n
        return cls(np.arange(n + 1) * h, np.full(n, h))

    @property
    def n(self) -> int:
        return self.points.size - 1

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    def same_as(self, other: "TimeGrid") -> bool:
        return self.points.shape == other.points.shape and bool(np.all(self.points == other.points))

    def shift(self, s: int) -> "TimeGrid":
        if not 0 <= s < self.n:
            raise RoughPathError(f"shift index {s} outside [0, {self.n - 1}]")
        return TimeGrid(self.points[s:] - self.points[s], self.steps[s:])

    def truncate(self, m: int) -> "TimeGrid":
        """Keep the first ``m`` intervals."""
        if not 1 <= m <= self.n:
            raise RoughPathError(f"cannot keep {m} of {self.n} intervals")
        return TimeGrid(self.points[: m + 1], self.steps[:m])

    def refine(self, depth: int) -> "TimeGrid":
        """Split every interval into ``2**depth`` equal pieces."""
        if depth < 0:
            raise RoughPathError("refinement depth must be >= 0")
        if depth == 0:
            return self
        k = 2**depth
        sub = np.repeat(self.steps / k, k)
        frac = np.arange(k) / k
        pts = (self.points[:-1, None] + frac[None, :] * self.steps[:, None]).ravel()
        pts = np.append(pts, self.points[-1])
        return TimeGrid(pts, sub)

    def __repr__(self) -> str:
        return f"TimeGrid(n={self.n}, T={self.horizon:g})"


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not ALPHA_MIN < alpha < ALPHA_MAX:
        raise RoughPathError(f"alpha must lie in (1/3, 1/2), got {alpha}")
    return alpha


@dataclass(frozen=True, eq=False)
class RoughPath:
    grid: TimeGrid
    x: np.ndarray
    x2_step: np.ndarray
    alpha: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).copy()
        x2 = np.asarray(self.x2_step, dtype=float).copy()
        if x.shape != (self.grid.n + 1,) or x2.shape != (self.grid.n,):
            raise RoughPathError(
                f"shape mismatch: grid has {self.grid.n} intervals, x has {x.shape}, x2_step has {x2.shape}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
            raise RoughPathError("rough path values must be finite")
        if x[0] != 0.0:
            raise RoughPathError("rough paths start at X_0 = 0")
        x.setflags(write=False)
        x2.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x2_step", x2)
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.x)

    def _area_cumsum(self) -> np.ndarray:
        # A_j = sum_{i<j} (X2_{t_i,t_i+1} + X_{t_i} dX_i), so that
        # X2_{s,t} = A_t - A_s - X_s (X_t - X_s).
        terms = self.x2_step + self.x[:-1] * self.increments
        return np.concatenate([[0.0], np.cumsum(terms)])

    def second_order_table(self) -> np.ndarray:
        """Full ``(n+1, n+1)`` table of ``X2_{s,t}``; entries with s > t are 0."""
        a = self._area_cumsum()
        tab = a[None, :] - a[:, None] - self.x[:, None] * (self.x[None, :] - self.x[:, None])
        return np.triu(tab)

    def second_order_from(self, s: int) -> np.ndarray:
        """``X2_{s,t}`` for all ``t >= s``."""
        a = self._area_cumsum()
        return a[s:] - a[s] - self.x[s] * (self.x[s:] - self.x[s])

    def window(self, i0: int, i1: int) -> "RoughPath":
        """Restriction to ``[t_i0, t_i1]`` re-based at time zero."""
        if not 0 <= i0 < i1 <= self.n:
            raise RoughPathError(f"bad window [{i0}, {i1}] for n={self.n}")
        return shift(self, i0).truncate(i1 - i0)

    def truncate(self, m: int) -> "RoughPath":
        return RoughPath(self.grid.truncate(m), self.x[: m + 1], self.x2_step[:m], self.alpha)

    def with_alpha(self, alpha: float) -> "RoughPath":
        return RoughPath(self.grid, self.x, self.x2_step, alpha)


def zero_path(grid: TimeGrid, alpha: float) -> RoughPath:
    return RoughPath(grid, np.zeros(grid.n + 1), np.zeros(grid.n), alpha)


def canonical_lift_smooth(f, grid: TimeGrid, alpha: float) -> RoughPath:
    """Geometric lift of the piecewise-linear interpolation of ``f``.

    ``f`` is either an array of samples on ``grid`` or a callable of time.
    On each linear piece the iterated integral is exactly ``increment**2 / 2``.
    """
    vals = f(grid.points) if callable(f) else f
    vals = np.asarray(vals, dtype=float)
    if vals.shape != grid.points.shape:
        raise RoughPathError(f"expected {grid.n + 1} samples, got shape {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise RoughPathError("non-finite samples cannot be lifted")
    x = vals - vals[0]
    dx = np.diff(x)
    return RoughPath(grid, x, 0.5 * dx * dx, alpha)


def default_alpha(hurst: float) -> float:
    a = hurst - 0.01
    if a <= ALPHA_MIN:
        a = 0.5 * (ALPHA_MIN + hurst)
    return min(a, ALPHA_MAX - 1e-9)


def _fgn_autocov(hurst: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2.0 * k**h2)


def sample_fgn(hurst: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-spacing fractional Gaussian noise by circulant embedding.

    Falls back to a Cholesky factorization if the embedding has a
    significantly negative eigenvalue.
    """
    rho = _fgn_autocov(hurst, n)
    circ = np.concatenate([rho[: n + 1], rho[n - 1 : 0 : -1]])
    lam = np.fft.fft(circ).real
    m = circ.size
    if lam.min() >= -1e-10 * lam.max():
        lam = np.clip(lam, 0.0, None)
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        w = np.fft.fft(np.sqrt(lam / m) * z)
        return w.real[:n]
    cov = rho[np.abs(np.subtract.outer(np.arange(n), np.arange(n)))]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceFactorizationError(hurst, n, str(exc)) from exc
    return chol @ rng.standard_normal(n)


def fbm_lift(hurst: float, n: int, T: float = 1.0, seed: int = 0, alpha: float | None = None) -> RoughPath:
    """Geometric (piecewise-linear) lift of a fractional Brownian motion sample."""
    if not (ALPHA_MIN < hurst <= 0.5):
        raise RoughPathError(f"Hurst index must lie in (1/3, 1/2], got {hurst}")
    if n < 1:
        raise RoughPathError(f"need at least one step, got n={n}")
    if alpha is None:
        alpha = default_alpha(hurst)
    if alpha >= hurst:
        raise RoughPathError(f"alpha={alpha} must be strictly below H={hurst}")
    rng = np.random.Generator(np.random.PCG64(seed))
    grid = TimeGrid.uniform(T, n)
    fgn = sample_fgn(hurst, n, rng) * (T / n) ** hurst
    x = np.concatenate([[0.0], np.cumsum(fgn)])
    return canonical_lift_smooth(x, grid, alpha)


def refine(X: RoughPath, depth: int) -> RoughPath:
    """Dyadic refinement of the piecewise-linear path behind ``X``.

    Sub-increments are linear; the part of ``x2_step`` beyond ``dx**2/2``
    (zero for geometric lifts) is spread uniformly over the pieces, which
    keeps Chen's relation exact on the coarse grid.
    """
    if depth == 0:
        return X
    k = 2**depth
    grid = X.grid.refine(depth)
    dx = X.increments
    frac = np.arange(k) / k
    x = (X.x[:-1, None] + frac[None, :] * dx[:, None]).ravel()
    x = np.append(x, X.x[-1])
    excess = X.x2_step - 0.5 * dx * dx
    sub = dx / k
    x2 = np.repeat(0.5 * sub * sub + excess / k, k)
    return RoughPath(grid, x, x2, X.alpha)


def chen_reconstruct(X: RoughPath, s: int, t: int) -> float:
    """``X2_{s,t}`` assembled from interval data via Chen's relation."""
    if s > t:
        raise RoughPathError(f"need s <= t, got s={s}, t={t}")
    if not (0 <= s and t <= X.n):
        raise RoughPathError(f"indices ({s}, {t}) outside grid with n={X.n}")
    if s == t:
        return 0.0
    xs = X.x[s]
    dx = X.increments[s:t]
    return float(np.sum(X.x2_step[s:t] + (X.x[s:t] - xs) * dx))


def chen_defect(x2_full: np.ndarray, x: np.ndarray) -> float:
    """Largest violation of Chen's relation over all grid triples s <= u <= t."""
    x = np.asarray(x, dtype=float)
    tab = np.asarray(x2_full, dtype=float)
    n1 = x.size
    if tab.shape != (n1, n1):
        raise RoughPathError(f"table shape {tab.shape} does not match path length {n1}")
    # With Q = X2 + x (x) x the defect reads Q_st - Q_su - Q_ut + x_u^2.
    q = tab + np.outer(x, x)
    worst = 0.0
    for u in range(n1):
        blk = q[: u + 1, u:] - q[: u + 1, u, None]
        blk -= q[u, u:] - x[u] * x[u]
        worst = max(worst, float(blk.max()), float(-blk.min()))
    return worst


def pairwise_holder(dist: np.ndarray, times: np.ndarray, theta: float) -> float:
    """Sup of ``dist[i, j] / (t_j - t_i)**theta`` over i < j given the upper triangle."""
    i, j = np.triu_indices(times.size, k=1)
    return float(np.max(dist[i, j] / (times[j] - times[i]) ** theta))


def holder_norm(values, grid: TimeGrid | np.ndarray, theta: float, weights: np.ndarray | None = None) -> float:
    """Discrete Hoelder seminorm ``sup_{s<t} |v_t - v_s| / (t - s)**theta``.

    ``values`` is either a 1-d array of scalars, or an array of shape
    ``(n+1, ...)`` of coefficient vectors; in the latter case the increment
    is measured in the weighted l2 norm with the (broadcastable) ``weights``.
    """
    from scipy.spatial.distance import pdist

    if theta <= 0:
        raise RoughPathError(f"Hoelder exponent must be positive, got {theta}")
    times = grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    v = np.asarray(values)
    if v.shape[0] != times.size or times.size == 0:
        raise RoughPathError("values and grid must be non-empty and of equal length")
    if times.size == 1:
        return 0.0
    if v.ndim == 1 and weights is None:
        d = np.abs(v[None, :] - v[:, None])
        return pairwise_holder(d, times, theta)
    flat = v.reshape(v.shape[0], -1)
    if weights is not None:
        flat = flat * np.sqrt(np.broadcast_to(weights, v.shape[1:]).ravel())[None, :]
    if np.iscomplexobj(flat):
        flat = np.concatenate([flat.real, flat.imag], axis=1)
    d = pdist(flat)
    dt = pdist(times[:, None])
    return float(np.max(d / dt**theta))


def rp_distance(X: RoughPath, Y: RoughPath) -> float:
    """Inhomogeneous alpha-Hoelder rough path distance on the common grid."""
    if not X.grid.same_as(Y.grid):
        raise RoughPathError(f"grid mismatch: {X.grid!r} vs {Y.grid!r}")
    if X.alpha != Y.alpha:
        raise RoughPathError(f"alpha mismatch: {X.alpha} vs {Y.alpha}")
    a = X.alpha
    first = holder_norm(X.x - Y.x, X.grid, a)
    diff = np.abs(X.second_order_table() - Y.second_order_table())
    second = pairwise_holder(diff, X.grid.points, 2 * a)
    return first + second


def rho_alpha(X: RoughPath) -> float:
    return rp_distance(X, zero_path(X.grid, X.alpha))


def shift(X: RoughPath, s: int) -> RoughPath:
    """Time shift: ``x_t -> X_{s, s+t}`` with interval data carried over."""
    if s == 0:
        return X
    grid = X.grid.shift(s)
    return RoughPath(grid, X.x[s:] - X.x[s], X.x2_step[s:], X.alpha)


def save(X: RoughPath, path, meta: dict | None = None) -> None:
    """Write ``X`` as ``t,x,x2_step`` rows under a ``#`` provenance line."""
    info = {"generator": GENERATOR_TAG, "alpha": repr(X.alpha)}
    if meta:
        info.update({k: repr(v) if isinstance(v, float) else str(v) for k, v in meta.items()})
    lines = ["# " + " ".join(f"{k}={info[k]}" for k in sorted(info)), "t,x,x2_step"]
    for i in range(X.n + 1):
        x2 = f"{X.x2_step[i]:.17g}" if i < X.n else ""
        lines.append(f"{X.grid.points[i]:.17g},{X.x[i]:.17g},{x2}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load(path) -> RoughPath:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    meta = {}
    rows = []
    for line in text:
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                meta[k] = v
        elif line.startswith("t,"):
            continue
        elif line.strip():
            rows.append(line.split(","))
    t = np.array([float(r[0]) for r in rows])
    x = np.array([float(r[1]) for r in rows])
    x2 = np.array([float(r[2]) for r in rows[:-1]])
    if "alpha" not in meta:
        raise RoughPathError(f"{path}: missing alpha in header")
    return RoughPath(TimeGrid(t), x, x2, float(meta["alpha"]))

