"""Local Picard solver, window concatenation, a-priori monitoring, cocycle check.

The equation is solved in mild form on the dyadic refinement of the driving
path's grid.  Within a window the Picard map is

    Phi(y)_t = S(t) y_0 + int_0^t S(t-s) F(y_s) ds + int_0^t S(t-s) G(y_s) dX_s,
    Phi(y)'_t = G(Phi(y)_t),

with the rough integral taken over the (refined) grid.  Windows snap to
points of the original grid so states are handed over exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import (
    Coefficients,
    _local_rough_weights,
    _phi,
    compose_G,
    composition_bound_check,
    decay_factors,
    drift_convolution_path,
    rough_convolution_path,
    transport,
)
from .controlled import ControlledPath, GubNormBreakdown, gubinelli_norm
from .rough_path import ALPHA_MAX, ALPHA_MIN, RoughPath, refine, shift
from .spectral import SpectralField

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class PicardDivergenceError(RuntimeError):
    def __init__(self, window: tuple[float, float], distances: list[float]):
        self.window = window
        self.distances = distances
        last = ", ".join(f"{d:.3e}" for d in distances[-2:])
        super().__init__(
            f"Picard iteration on [{window[0]:g}, {window[1]:g}] did not contract "
            f"within {len(distances)} iterations (last distances {last}); window too long?"
        )


class BlowUpError(RuntimeError):
    def __init__(self, time: float, history: np.ndarray, reason: str):
        self.time = time
        self.history = history
        super().__init__(f"blow-up at t={time:g}: {reason}")


@dataclass(frozen=True)
class SolverConfig:
    gamma: float = 0.5
    alpha: float = 0.4
    sigma: float = 0.0
    delta: float = 0.0
    T: float = 1.0
    n: int = 256
    depth: int = 0
    picard_tol: float = 1e-8
    max_iters: int = 50
    contraction_target: float = 0.5
    C: float | None = None
    window_steps: int | None = None
    norm_points: int = 128
    blowup_ceiling: float = 1e12
    mass: float = 0.0

    def __post_init__(self):
        if not ALPHA_MIN < self.alpha < ALPHA_MAX:
            raise ConfigError(f"alpha must lie in (1/3, 1/2), got {self.alpha}")
        if not 0.0 <= self.sigma < self.alpha:
            raise ConfigError(f"sigma must lie in [0, alpha), got {self.sigma}")
        if not 0.0 <= self.delta < 1.0:
            raise ConfigError(f"delta must lie in [0, 1), got {self.delta}")
        if not self.T > 0 or self.n < 1 or self.depth < 0:
            raise ConfigError(f"need T > 0, n >= 1, depth >= 0; got T={self.T}, n={self.n}, depth={self.depth}")
        if not self.picard_tol > 0 or self.max_iters < 1:
            raise ConfigError("picard_tol must be positive and max_iters >= 1")
        if not 0 < self.contraction_target < 1:
            raise ConfigError(f"contraction target must lie in (0, 1), got {self.contraction_target}")
        if self.window_steps is not None and self.window_steps < 1:
            raise ConfigError(f"window_steps must be >= 1, got {self.window_steps}")
        if self.C is not None and not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if self.mass < 0:
            raise ConfigError(f"mass must be non-negative, got {self.mass}")

    @property
    def eta(self) -> float:
        return min(self.alpha - self.sigma, 1.0 - self.delta)


def window_rule(cfg: SolverConfig, C: float, step: float | None = None) -> float:
    """Window length ``h`` with ``C h^eta = contraction_target``, C clamped to >= 1."""
    C = max(float(C), 1.0)
    h = (cfg.contraction_target / C) ** (1.0 / cfg.eta)
    if step is not None:
        h = max(h, step)
    return min(h, cfg.T)


@dataclass(frozen=True)
class PicardStats:
    iterations: int
    distances: tuple[float, ...]

    @property
    def contraction(self) -> float:
        d = self.distances
        if len(d) < 2 or d[-2] == 0:
            return 0.0
        return d[-1] / d[-2]


def _norm_stride(m: int, cap: int) -> int:
    return max(1, math.ceil(m / cap))


def picard_local(y0, coeffs: Coefficients, X: RoughPath, cfg: SolverConfig,
                 t_offset: float = 0.0) -> tuple[ControlledPath, PicardStats]:
    """Fixed point of the mild map on the window covered by ``X``.

    ``X`` lives on the solver grid (already refined) and starts at zero.
    Starts from ``(S(t) y0, G(S(t) y0))`` and stops once the Gubinelli distance
    of successive iterates is below ``picard_tol * max(1, norm)``.
    """
    sc = coeffs.scale
    y0 = y0.coeffs if isinstance(y0, SpectralField) else np.asarray(y0, dtype=complex)
    grid = X.grid
    dec = decay_factors(grid, sc)
    phi = _phi(grid, sc)
    wA, wB = _local_rough_weights(X, sc, 0)
    stride = _norm_stride(X.n, cfg.norm_points)
    window = (t_offset, t_offset + grid.horizon)

    y = transport(y0, dec)
    yp = coeffs.G(y)
    dists: list[float] = []
    for it in range(1, cfg.max_iters + 1):
        head = y[:-1]
        local = wA * yp[:-1] + wB * coeffs.DGG(head)
        if coeffs.drift is not None:
            local = local + phi * coeffs.F(head)
        with np.errstate(over="ignore", invalid="ignore"):
            z = transport(y0, dec, local)
            zp = coeffs.G(z)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(zp))):
            bad = int(np.argmax(~np.isfinite(sc.norm(z, 0.0))))
            raise BlowUpError(t_offset + grid.points[bad], sc.norm(y, cfg.gamma), "non-finite Picard iterate")
        diff = ControlledPath(grid, z - y, zp - yp, cfg.gamma, cfg.alpha, sc)
        d = gubinelli_norm(diff, X, stride).total
        dists.append(d)
        y, yp = z, zp
        if d == 0.0:
            break
        ref = gubinelli_norm(ControlledPath(grid, y, yp, cfg.gamma, cfg.alpha, sc), X, stride).total
        if not math.isfinite(ref):
            raise BlowUpError(window[1], sc.norm(y, cfg.gamma), "overflow in Gubinelli norm")
        if d <= cfg.picard_tol * max(1.0, ref):
            break
    else:
        raise PicardDivergenceError(window, dists)
    return ControlledPath(grid, y, yp, cfg.gamma, cfg.alpha, sc), PicardStats(len(dists), tuple(dists))


@dataclass(frozen=True)
class WindowInfo:
    start: float
    end: float
    i0: int
    i1: int
    iterations: int
    contraction: float
    gubinelli_norm: float
    start_norm: float
    C_window: float
    C_used: float

    def csv_row(self) -> str:
        return (f"{self.start:.17g},{self.end:.17g},{self.iterations},"
                f"{self.contraction:.17g},{self.gubinelli_norm:.17g}")


@dataclass
class SolutionRecord:
    trajectory: ControlledPath
    path: RoughPath
    base_stride: int
    windows: list[WindowInfo]
    config: SolverConfig
    constants: dict = field(default_factory=dict)

    @property
    def base_index(self) -> np.ndarray:
        return np.arange(0, self.trajectory.n + 1, self.base_stride)

    @property
    def base_times(self) -> np.ndarray:
        return self.trajectory.grid.points[self.base_index]

    @property
    def base_states(self) -> np.ndarray:
        return self.trajectory.y[self.base_index]

    @property
    def final(self) -> np.ndarray:
        return self.trajectory.y[-1]

    @property
    def sup_norm_history(self) -> np.ndarray:
        return self.trajectory.scale.norm(self.base_states, self.config.gamma)


def _windows_fixed(n: int, m: int) -> list[tuple[int, int]]:
    return [(i, min(i + m, n)) for i in range(0, n, m)]


def _window_end(points: np.ndarray, i0: int, h: float) -> int:
    target = points[i0] + h * (1 + 1e-12)
    i1 = int(np.searchsorted(points, target, side="right")) - 1
    return min(max(i1, i0 + 1), points.size - 1)


def global_solve(y0, coeffs: Coefficients, X: RoughPath, cfg: SolverConfig) -> SolutionRecord:
    """Solve on ``[0, T]`` by consecutive local Picard solves.

    With ``cfg.window_steps`` the windows have that many grid steps.
    Otherwise windows follow :func:`window_rule` with a constant ``C`` that is
    measured on every window as the smallest value satisfying

        ||(y, G(y))||_window <= C (r_w + h^eta ||(y, G(y))||_window),  r_w = max(1, |y_start|_gamma);

    when a window needs a larger C than the one in force it is re-solved with
    a shorter length.  ``cfg.C`` pins the constant instead.
    """
    sc = coeffs.scale
    y_start = y0.coeffs if isinstance(y0, SpectralField) else np.asarray(y0, dtype=complex)
    k = 2**cfg.depth
    fine = refine(X, cfg.depth)
    base_pts = X.grid.points
    n = X.n
    eta = cfg.eta
    r0 = max(1.0, float(sc.norm(y_start, cfg.gamma)))
    adaptive = cfg.window_steps is None and cfg.C is None
    C = 1.0 if cfg.C is None else max(1.0, cfg.C)
    min_step = float(np.min(X.grid.steps))

    pieces_y, pieces_yp = [], []
    infos: list[WindowInfo] = []
    history = [float(sc.norm(y_start, cfg.gamma))]
    i0 = 0
    while i0 < n:
        if cfg.window_steps is not None:
            i1 = min(i0 + cfg.window_steps, n)
        else:
            i1 = _window_end(base_pts, i0, window_rule(cfg, C, min_step))
        Xw = fine.window(i0 * k, i1 * k)
        path, stats = picard_local(y_start, coeffs, Xw, cfg, t_offset=base_pts[i0])
        stride = _norm_stride(Xw.n, cfg.norm_points)
        gn = gubinelli_norm(path, Xw, stride).total
        h = base_pts[i1] - base_pts[i0]
        r_w = max(1.0, float(sc.norm(y_start, cfg.gamma)))
        C_w = gn / (r_w + h**eta * gn) if gn > 0 else 0.0
        if adaptive and C_w > C and i1 - i0 > 1:
            C = 1.25 * C_w
            log.debug("window [%g, %g]: measured C=%.3g, shrinking", base_pts[i0], base_pts[i1], C_w)
            continue
        sup = sc.norm(path.y, cfg.gamma)
        history.extend(float(v) for v in sup[k::k])
        if not np.all(np.isfinite(sup)) or np.max(sup) > cfg.blowup_ceiling * r0:
            raise BlowUpError(base_pts[i1], np.array(history), f"|y|_gamma exceeded {cfg.blowup_ceiling:g} * r")
        infos.append(WindowInfo(base_pts[i0], base_pts[i1], i0, i1, stats.iterations, stats.contraction,
                                gn, r_w, C_w, C))
        pieces_y.append(path.y if not pieces_y else path.y[1:])
        pieces_yp.append(path.y_prime if not pieces_yp else path.y_prime[1:])
        y_start = path.y[-1]
        i0 = i1

    traj = ControlledPath(fine.grid, np.concatenate(pieces_y), np.concatenate(pieces_yp), cfg.gamma, cfg.alpha, sc)
    constants = {
        "C": max(w.C_used for w in infos),
        "C_window_max": max(w.C_window for w in infos),
        "eta": eta,
        "r": r0,
        "windows": len(infos),
    }
    return SolutionRecord(traj, fine, k, infos, cfg, constants)


def picard_sweep(record: SolutionRecord, coeffs: Coefficients) -> ControlledPath:
    """Apply the mild map once more, window by window, to a solved record."""
    sc = coeffs.scale
    k = record.base_stride
    cfg = record.config
    ys, yps = [], []
    for w in record.windows:
        Xw = record.path.window(w.i0 * k, w.i1 * k)
        seg = record.trajectory.y[w.i0 * k : w.i1 * k + 1]
        dec = decay_factors(Xw.grid, sc)
        wA, wB = _local_rough_weights(Xw, sc, 0)
        local = wA * coeffs.G(seg[:-1]) + wB * coeffs.DGG(seg[:-1])
        if coeffs.drift is not None:
            local = local + _phi(Xw.grid, sc) * coeffs.F(seg[:-1])
        z = transport(seg[0], dec, local)
        ys.append(z if not ys else z[1:])
        yps.append(coeffs.G(z) if not yps else coeffs.G(z)[1:])
    return ControlledPath(record.trajectory.grid, np.concatenate(ys), np.concatenate(yps), cfg.gamma, cfg.alpha, sc)


def mild_residual_profile(record: SolutionRecord, coeffs: Coefficients, extra_depth: int = 1) -> np.ndarray:
    """``|y_t - S(t)y_0 - drift - rough convolution|_{gamma - 2 alpha}`` at the original grid points.

    The rough convolution is recomputed over the whole horizon on the solver
    grid refined ``extra_depth`` more times; the drift uses the solver grid.
    """
    sc = coeffs.scale
    cfg = record.config
    p = record.trajectory
    X = record.path
    free = transport(p.y[0], decay_factors(X.grid, sc))
    integrand = compose_G(p, coeffs)
    rough = rough_convolution_path(integrand, X, extra_depth) if coeffs.has_noise else 0.0
    drift = drift_convolution_path(p.y, coeffs, X.grid) if coeffs.drift is not None else 0.0
    res = p.y - free - drift - rough
    return sc.norm(res[record.base_index], cfg.gamma - 2 * cfg.alpha)


def mild_residual(record: SolutionRecord, coeffs: Coefficients, extra_depth: int = 1) -> float:
    return float(np.max(mild_residual_profile(record, coeffs, extra_depth)))


@dataclass(frozen=True)
class AprioriFit:
    M1: float
    M2: float
    M2_half: float
    ok: bool

    def bound(self, r: float, t) -> np.ndarray:
        return self.M1 * r * np.exp(self.M2 * np.asarray(t))


def _growth_rate(logs: np.ndarray, t: np.ndarray) -> float:
    return float(max(0.0, np.max(logs[1:] / t[1:]))) if t.size > 1 else 0.0


def apriori_monitor(record: SolutionRecord, r: float | None = None, m1: float = 1.0) -> AprioriFit:
    """Smallest growth rate ``M2`` with ``sup_{[0,t]} |y|_gamma <= M1 r e^{M2 t}`` for fixed ``M1``.

    ``ok`` asks the fit to be stable when the horizon is extended: the bound
    fitted on the first half, with ``M1`` doubled and ``M2`` raised by 25%,
    must still hold on the whole horizon.  Super-exponential growth fails this.
    """
    hist = record.sup_norm_history
    t = record.base_times
    if r is None:
        r = max(1.0, float(hist[0]))
    if not np.all(np.isfinite(hist)):
        return AprioriFit(m1, math.inf, math.inf, False)
    running = np.maximum.accumulate(hist) / r
    with np.errstate(divide="ignore"):
        logs = np.log(running / m1)
    m2 = _growth_rate(logs, t)
    half = int(np.searchsorted(t, t[-1] / 2, side="right"))
    m2_half = _growth_rate(logs[:half], t[:half])
    ok = math.isfinite(m2) and bool(np.all(logs <= math.log(2.0) + 1.25 * m2_half * t + 1e-12))
    return AprioriFit(m1, m2, m2_half, ok)


def _grid_index(X: RoughPath, tau) -> int:
    if isinstance(tau, (int, np.integer)):
        idx = int(tau)
    else:
        pts = X.grid.points
        idx = int(np.argmin(np.abs(pts - tau)))
        if abs(pts[idx] - tau) > 1e-12 * max(1.0, X.grid.horizon):
            raise ConfigError(f"split time {tau} is not a grid point")
    if not 0 <= idx < X.n:
        raise ConfigError(f"split index {idx} outside [0, {X.n})")
    return idx


def cocycle_check(y0, coeffs: Coefficients, X: RoughPath, tau, cfg: SolverConfig) -> float:
    """``|phi(t+tau, w, y0) - phi(t, theta_tau w, phi(tau, w, y0))|_gamma`` with ``t + tau = T``."""
    s = _grid_index(X, tau)
    sc = coeffs.scale
    full = global_solve(y0, coeffs, X, cfg).final
    mid = y0 if s == 0 else global_solve(y0, coeffs, X.truncate(s), cfg).final
    rest = global_solve(mid, coeffs, shift(X, s), cfg).final
    return float(sc.norm(full - rest, cfg.gamma))


def measured_constants(record: SolutionRecord, coeffs: Coefficients) -> dict[str, float]:
    """Constants measured on the first window: norm of the free evolution
    over ``|y0|``, composition norm over ``1 + norm``, and the window constant."""
    sc = coeffs.scale
    cfg = record.config
    w = record.windows[0]
    k = record.base_stride
    Xw = record.path.window(w.i0 * k, w.i1 * k)
    stride = _norm_stride(Xw.n, cfg.norm_points)
    seg = record.trajectory.y[w.i0 * k : w.i1 * k + 1]
    y0 = seg[0]
    free = transport(y0, decay_factors(Xw.grid, sc))
    init = ControlledPath(Xw.grid, free, np.zeros_like(free), cfg.gamma, cfg.alpha, sc)
    n0 = float(sc.norm(y0, cfg.gamma))
    out = {"initial_data": gubinelli_norm(init, Xw, stride).total / n0 if n0 > 0 else 0.0}
    p = ControlledPath(Xw.grid, seg, coeffs.G(seg), cfg.gamma, cfg.alpha, sc)
    lhs, rhs = composition_bound_check(p, coeffs, Xw, stride)
    out["composition"] = lhs / rhs
    out["window_constant"] = w.C_window
    return out


def breakdown_on_window(record: SolutionRecord, index: int) -> GubNormBreakdown:
    cfg = record.config
    k = record.base_stride
    w = record.windows[index]
    Xw = record.path.window(w.i0 * k, w.i1 * k)
    seg = slice(w.i0 * k, w.i1 * k + 1)
    p = ControlledPath(Xw.grid, record.trajectory.y[seg], record.trajectory.y_prime[seg], cfg.gamma, cfg.alpha,
                       record.trajectory.scale)
    return gubinelli_norm(p, Xw, _norm_stride(Xw.n, cfg.norm_points))
