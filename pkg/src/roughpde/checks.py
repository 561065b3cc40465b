"""Numbered acceptance criteria, shared by ``roughpde check`` and the test suite.

Each criterion returns a :class:`CheckResult`; a criterion passes when its
numerical contract holds and it finished within its runtime budget.
"""
from __future__ import annotations

import contextlib
import io
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rough_path as rp
from .calculus import (
    composition_bound_check,
    drift_convolution,
    linear_coefficients,
    rough_convolution,
    sewing_error_probe,
    torus_example,
    zero_coefficients,
)
from .controlled import ControlledPath
from .solver import SolverConfig, apriori_monitor, cocycle_check, global_solve
from .spectral import SpaceScale, interpolation_check, verify_sg_bounds


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    ok: bool
    detail: str
    elapsed: float
    budget: float

    @property
    def passed(self) -> bool:
        return self.ok and self.elapsed <= self.budget

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number} {self.name}: {self.detail} ({self.elapsed:.1f}s / {self.budget:g}s)"


# --------------------------------------------------------------------------
# shared scenarios


def smooth_profile(scale: SpaceScale) -> np.ndarray:
    """A fixed real field with all modes populated: ``exp(cos x_1)``."""
    return scale.from_function(lambda *xs: np.exp(np.cos(xs[0]))).coeffs


def sewing_scenario(X: rp.RoughPath, scale: SpaceScale, gamma: float = 0.5, lam: float = 1.0) -> ControlledPath:
    """``y_t = exp(lam X_t) S(t) v`` with ``y' = lam y``: the linear equation's exact solution."""
    v = smooth_profile(scale)
    t = X.grid.points
    y = np.exp(lam * X.x).reshape(-1, *([1] * scale.dim)) * np.exp(-np.multiply.outer(t, scale.rate)) * v
    return ControlledPath(X.grid, y, lam * y, gamma, X.alpha, scale)


def geometric_oracle_error(X: rp.RoughPath, scale: SpaceScale, lam: float, depth: int, gamma: float = 0.5,
                           picard_tol: float = 1e-8) -> float:
    """Relative sup error of the solver against ``exp(lam X_t) S(t) y0`` at grid points."""
    y0 = smooth_profile(scale)
    cfg = SolverConfig(gamma=gamma, alpha=X.alpha, T=X.grid.horizon, n=X.n, depth=depth, picard_tol=picard_tol)
    rec = global_solve(y0, linear_coefficients(scale, lam), X, cfg)
    exact = sewing_scenario(X, scale, gamma, lam).y
    return float(np.max(scale.norm(rec.base_states - exact, gamma)) / np.max(scale.norm(exact, gamma)))


def _timed(number: int, name: str, budget: float, fn) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    return CheckResult(number, name, bool(ok), detail, time.perf_counter() - t0, budget)


# --------------------------------------------------------------------------
# criteria


def _chen() -> tuple[bool, str]:
    worst = 0.0
    hs = (0.35, 0.4, 0.5)
    for i in range(100):
        X = rp.fbm_lift(hs[i % 3], 512, 1.0, seed=i)
        worst = max(worst, rp.chen_defect(X.second_order_table(), X.x))
    rng = np.random.default_rng(0)
    fs = (lambda t: t, lambda t: t * t, lambda t: np.sin(2 * np.pi * t), np.exp, lambda t: 0 * t)
    ragged = rp.TimeGrid(np.concatenate([[0.0], np.sort(rng.uniform(0, 2, 63)), [2.0]]))
    grids = [rp.TimeGrid.uniform(1.0, 64), ragged]
    smooth = 0.0
    for g in grids:
        for f in fs:
            X = rp.canonical_lift_smooth(f, g, 0.4)
            smooth = max(smooth, rp.chen_defect(X.second_order_table(), X.x))
    return max(worst, smooth) < 1e-12, f"fBm defect {worst:.2e}, smooth defect {smooth:.2e}"


def _interpolation() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        sc = SpaceScale(int(rng.integers(1, 3)), int(rng.integers(1, 9)))
        u = sc.random_field(rng, decay=float(rng.uniform(0.0, 2.0)))
        th, be, ga = np.sort(rng.uniform(-1.0, 2.0, 3))
        lhs, rhs = interpolation_check(u, th, be, ga)
        worst = max(worst, lhs / rhs)
    eq = 0.0
    for _ in range(200):
        sc = SpaceScale(int(rng.integers(1, 3)), 6)
        k = tuple(int(v) for v in rng.integers(-6, 7, sc.dim))
        u = sc.mode(k, complex(*rng.normal(size=2)))
        th, be, ga = np.sort(rng.uniform(-1.0, 2.0, 3))
        lhs, rhs = interpolation_check(u, th, be, ga)
        eq = max(eq, abs(lhs - rhs) / max(1.0, rhs))
    return worst <= 1 + 1e-10 and eq <= 1e-12, f"max lhs/rhs {worst:.12f}, single-mode gap {eq:.1e}"


def _semigroup() -> tuple[bool, str]:
    inc, drift = 0.0, 0.0
    for mass in (0.0, 1.0):
        sc = SpaceScale(1, 32, mass)
        for sigma in (0.0, 0.25, 0.5, 1.0):
            consts = []
            for m in (128, 256, 512):
                rep = verify_sg_bounds(sc, 0.5, sigma, np.logspace(-4, 0, m))
                inc = max(inc, rep.increment_constant)
                consts.append(rep.smoothing_constant)
            drift = max(drift, abs(consts[-1] - consts[-2]) / consts[-1])
    return inc <= 1 + 1e-10 and drift <= 0.05, f"increment constant {inc:.12f}, smoothing constant change {drift:.2%}"


def _sewing() -> tuple[bool, str]:
    sc = SpaceScale(1, 8)
    a = 0.4
    worst = np.inf
    parts = []
    for seed in range(4):
        X = rp.fbm_lift(0.45, 256, 1.0, seed=seed, alpha=a)
        p = sewing_scenario(X, sc)
        for beta in (0.0, a, 2 * a):
            pr = sewing_error_probe(p, X, beta, tuple(2**j for j in range(7)), refine=3)
            worst = min(worst, pr.rate - pr.floor)
            if seed == 0:
                parts.append(f"beta={beta:g}: {pr.rate:.3f} (floor {pr.floor:.2f})")
    return worst >= 0, "; ".join(parts) + f"; min margin over seeds {worst:.3f}"


def _oracles() -> tuple[bool, str]:
    g = rp.TimeGrid.uniform(1.0, 64)
    X = rp.canonical_lift_smooth(lambda t: t, g, 0.4)
    sc0 = SpaceScale(1, 0)
    p = ControlledPath(g, X.x.reshape(-1, 1).astype(complex), np.ones((g.n + 1, 1), complex), 0.5, 0.4, sc0)
    a_err = max(abs(rough_convolution(p, X, refine=d)[0] - 0.5) for d in range(7))
    sc = SpaceScale(1, 2)
    y0 = sc.mode((1,), 1.0).coeffs
    co = linear_coefficients(sc, 0.0, drift=lambda y: y)
    grid = rp.TimeGrid.uniform(1.0, 50)
    val = drift_convolution(np.broadcast_to(y0, (grid.n + 1,) + sc.shape), co, grid)[sc.cutoff + 1]
    b_err = abs(val - (1 - np.exp(-1.0)))
    X = rp.fbm_lift(0.45, 512, 1.0, seed=7)
    errs = [geometric_oracle_error(X, SpaceScale(1, 8), 1.0, d) for d in range(6)]
    mono = all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    ok = a_err <= 1e-14 and b_err <= 1e-10 and errs[-1] < 1e-3 and mono
    return ok, (f"int X dX error {a_err:.1e}; drift error {b_err:.1e}; oracle errors "
                + ", ".join(f"{e:.2e}" for e in errs))


def _composition() -> tuple[bool, str]:
    sc = SpaceScale(1, 8)
    X = rp.fbm_lift(0.45, 256, 1.0, seed=11, alpha=0.4)
    g = sc.from_function(lambda x: 1.0 + 0.25 * np.cos(x))
    co = linear_coefficients(sc, 1.0, sigma=0.1, g=g)
    base = sewing_scenario(X, sc)
    base = ControlledPath(X.grid, base.y, co.G(base.y), 0.5, 0.4, sc)
    lams = np.array([1.0, 2.0, 4.0, 8.0])
    lhs = np.array([composition_bound_check(lam * base, co, X, stride=2)[0] for lam in lams])
    fit = np.polyval(np.polyfit(lams, lhs, 1), lams)
    r2 = 1 - np.sum((lhs - fit) ** 2) / np.sum((lhs - lhs.mean()) ** 2)
    curv = abs(np.polyfit(lams, lhs, 2)[0]) * lams[-1] ** 2 / lhs[-1]
    return r2 >= 0.999, f"affine R^2 {r2:.9f}, quadratic share at lambda=8 {curv:.1e}"


def _globalization() -> tuple[bool, str]:
    sc = SpaceScale(1, 8)
    co = torus_example(sc)
    y0 = smooth_profile(sc)
    parts, ok = [], True
    for T in (1.0, 2.0, 4.0):
        n = int(128 * T)
        X = rp.fbm_lift(0.45, n, T, seed=3, alpha=0.4)
        cfg = SolverConfig(gamma=0.5, alpha=0.4, sigma=0.1, T=T, n=n, depth=1)
        rec = global_solve(y0, co, X, cfg)
        C = rec.constants["C"]
        r = rec.constants["r"]
        hist = sc.norm(rec.trajectory.y, 0.5)
        k2 = rec.base_stride
        growth = all(np.log(np.max(hist[w.i0 * k2 : w.i1 * k2 + 1])) <= (k + 1) * np.log(2 * C) + np.log(r)
                     for k, w in enumerate(rec.windows))
        fit = apriori_monitor(rec)
        ok &= growth and fit.ok and np.all(np.isfinite(hist))
        parts.append(f"T={T:g}: {len(rec.windows)} windows, C={C:.3f}, M2={fit.M2:.3f}")
    X = rp.fbm_lift(0.45, 128, 1.0, seed=3, alpha=0.4)
    states = {}
    for k in (1, 2, 4, 8):
        cfg = SolverConfig(gamma=0.5, alpha=0.4, sigma=0.1, n=128, depth=1, window_steps=128 // k, max_iters=100)
        states[k] = global_solve(y0, co, X, cfg).base_states
    tol = SolverConfig().picard_tol
    gap = max(float(np.max(sc.norm(states[k] - states[2 * k], 0.5)) / max(1.0, np.max(sc.norm(states[k], 0.5))))
              for k in (1, 2, 4))
    ok &= gap <= 10 * tol
    return ok, "; ".join(parts) + f"; k vs 2k gap {gap:.1e}"


def _cocycle() -> tuple[bool, str]:
    from .cli import ExperimentConfig, build_coefficients, initial_condition

    ec = ExperimentConfig()
    sc = ec.scale()
    X = ec.rough_path()
    y0 = initial_condition(ec, sc)
    cfg = ec.solver_config()
    co = build_coefficients(ec, sc)
    d = cocycle_check(y0, co, X, 0.5, cfg)
    d0 = cocycle_check(y0, co, X, 0, cfg)
    dz = cocycle_check(y0, zero_coefficients(sc), X, 0.5, cfg)
    return d < 1e-6 and d0 == 0.0 and dz == 0.0, f"tau=1/2: {d:.2e}; tau=0: {d0:g}; deterministic: {dz:g}"


def _snapshot(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _determinism() -> tuple[bool, str]:
    from .cli import main

    runs = [
        ["lift", "--seeds", "0", "1"],
        ["solve", "--n", "128"],
        ["solve", "--preset", "torus_example", "--n", "128", "--out", "torus"],
        ["converge", "--n", "128", "--converge-depth", "4"],
        ["cocycle", "--n", "128"],
    ]
    snaps, codes = [], []
    old = os.environ.get("RPDE_OUTPUT_ROOT")
    try:
        for _ in range(2):
            with tempfile.TemporaryDirectory() as tmp:
                os.environ["RPDE_OUTPUT_ROOT"] = tmp
                with contextlib.redirect_stdout(io.StringIO()):
                    codes.append([main(list(a)) for a in runs])
                snaps.append(_snapshot(Path(tmp)))
    finally:
        if old is None:
            os.environ.pop("RPDE_OUTPUT_ROOT", None)
        else:
            os.environ["RPDE_OUTPUT_ROOT"] = old
    same = snaps[0] == snaps[1] and len(snaps[0]) > 0
    ok = same and codes[0] == codes[1] and all(c == 0 for c in codes[0])
    return ok, f"{len(snaps[0])} files byte-identical: {same}; exit codes {codes[0]}"


CRITERIA = {
    1: ("chen relation", 10.0, _chen),
    2: ("interpolation inequality", 5.0, _interpolation),
    3: ("semigroup bounds", 5.0, _semigroup),
    4: ("sewing exponents", 120.0, _sewing),
    5: ("exact oracles", 120.0, _oracles),
    6: ("affine composition", 60.0, _composition),
    7: ("globalization", 300.0, _globalization),
    8: ("cocycle", 60.0, _cocycle),
    9: ("determinism", 900.0, _determinism),
}
SUITE_BUDGET = 900.0


def run_criterion(number: int) -> CheckResult:
    name, budget, fn = CRITERIA[number]
    return _timed(number, name, budget, fn)


def run_all(which=None, echo: bool = False) -> list[CheckResult]:
    out = []
    t0 = time.perf_counter()
    for k in sorted(CRITERIA if which is None else which):
        res = run_criterion(k)
        if echo:
            print(res.line(), flush=True)
        out.append(res)
    total = time.perf_counter() - t0
    if echo:
        print(f"suite time {total:.1f}s (budget {SUITE_BUDGET:g}s)")
    if which is None and total > SUITE_BUDGET:
        out.append(CheckResult(9, "suite runtime", False, f"{total:.1f}s", total, SUITE_BUDGET))
    return out
