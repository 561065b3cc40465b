"""Command-line front end: ``roughpde {lift,solve,converge,cocycle,check}``.

Every run is described by an :class:`ExperimentConfig` read from an optional
JSON file, with scalar fields overridable by flags.  Outputs go below
``$RPDE_OUTPUT_ROOT`` (default: current directory) in the ``out`` subfolder.

Exit codes: 0 success, 1 I/O failure, 2 invalid configuration, 3 solver
diagnostic (blow-up or non-contraction), 4 failed probe or threshold.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import sympy

from . import rough_path as rp
from .calculus import (
    Coefficients,
    linear_coefficients,
    linear_drift,
    pointwise,
    quadratic_unsafe,
    sewing_error_probe,
    torus_example,
)
from .solver import (
    BlowUpError,
    ConfigError,
    PicardDivergenceError,
    SolverConfig,
    apriori_monitor,
    cocycle_check,
    global_solve,
    measured_constants,
    mild_residual_profile,
)
from .spectral import SpaceScale, SpectralError

log = logging.getLogger("roughpde")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_BLOWUP, EXIT_PROBE = 0, 1, 2, 3, 4
PRESETS = ("linear_g", "torus_example", "custom", "quadratic_unsafe")
OUTPUT_ROOT_ENV = "RPDE_OUTPUT_ROOT"


@dataclass(frozen=True)
class ExperimentConfig:
    hurst: float = 0.45
    seed: int = 0
    seeds: tuple[int, ...] | None = None
    n: int = 256
    T: float = 1.0
    alpha: float | None = None
    gamma: float = 0.5
    depth: int = 2
    picard_tol: float = 1e-8
    max_iters: int = 50
    window_steps: int | None = None
    C: float | None = None
    blowup_ceiling: float = 1e12
    dim: int = 1
    cutoff: int = 8
    mass: float = 0.0
    preset: str = "linear_g"
    lam: float = 1.0
    sigma: float | None = None
    delta: float = 0.0
    g_amp: float | None = None
    drift_factor: float = 0.0
    f: str = "sin(u)"
    y0: str = "1 + cos(x1)"
    tau: float = 0.5
    threshold: float = 1e-6
    converge_depth: int = 6
    refine: int = 3
    out: str = "roughpde_out"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose one of {', '.join(PRESETS)}")
        if not rp.ALPHA_MIN < self.hurst <= 0.5:
            raise ConfigError(f"Hurst index must lie in (1/3, 1/2], got {self.hurst}")
        if self.alpha is not None and not self.alpha < self.hurst:
            raise ConfigError(f"alpha must be below the Hurst index, got alpha={self.alpha}, H={self.hurst}")
        if self.dim < 1 or self.cutoff < 0:
            raise ConfigError("need dim >= 1 and cutoff >= 0")
        if self.converge_depth < 1 or self.refine < 0:
            raise ConfigError("need converge_depth >= 1 and refine >= 0")
        if self.threshold <= 0:
            raise ConfigError("threshold must be positive")
        self.solver_config()

    @property
    def sigma_value(self) -> float:
        if self.sigma is not None:
            return self.sigma
        return 0.1 if self.preset in ("torus_example", "custom") else 0.0

    @property
    def g_amp_value(self) -> float:
        if self.g_amp is not None:
            return self.g_amp
        return 0.25 if self.preset in ("torus_example", "custom") else 0.0

    @property
    def alpha_value(self) -> float:
        return rp.default_alpha(self.hurst) if self.alpha is None else self.alpha

    @property
    def seed_list(self) -> tuple[int, ...]:
        return (self.seed,) if self.seeds is None else tuple(self.seeds)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            gamma=self.gamma, alpha=self.alpha_value, sigma=self.sigma_value, delta=self.delta, T=self.T, n=self.n,
            depth=self.depth, picard_tol=self.picard_tol, max_iters=self.max_iters, C=self.C,
            window_steps=self.window_steps, blowup_ceiling=self.blowup_ceiling, mass=self.mass,
        )

    def scale(self) -> SpaceScale:
        return SpaceScale(self.dim, self.cutoff, self.mass)

    def rough_path(self, seed: int | None = None) -> rp.RoughPath:
        return rp.fbm_lift(self.hurst, self.n, self.T, self.seed if seed is None else seed, self.alpha_value)


def _field_types() -> dict[str, type]:
    out = {}
    for f in fields(ExperimentConfig):
        t = str(f.type)
        out[f.name] = int if t.startswith("int") else float if t.startswith("float") else str if t == "str" else tuple
    return out


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    if data.get("seeds") is not None:
        data["seeds"] = tuple(int(s) for s in data["seeds"])
    try:
        return ExperimentConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from e


# --------------------------------------------------------------------------
# scenario construction


def _symbols(dim: int):
    return sympy.symbols(" ".join(f"x{j + 1}" for j in range(dim)) + " x", seq=True)


def parse_expression(text: str, names) -> callable:
    try:
        expr = sympy.sympify(text, locals={str(s): s for s in names})
    except (sympy.SympifyError, SyntaxError, TypeError) as e:
        raise ConfigError(f"cannot parse expression {text!r}: {e}") from e
    free = {str(s) for s in expr.free_symbols}
    allowed = {str(s) for s in names}
    if not free <= allowed:
        raise ConfigError(f"expression {text!r} uses unknown symbols {sorted(free - allowed)}")
    return sympy.lambdify(names, expr, modules="numpy")


def initial_condition(cfg: ExperimentConfig, scale: SpaceScale) -> np.ndarray:
    syms = _symbols(cfg.dim)
    fn = parse_expression(cfg.y0, syms)
    # "x" aliases x1
    u = scale.from_function(lambda *xs: np.broadcast_to(fn(*xs, xs[0]), xs[0].shape))
    return u.coeffs


def build_coefficients(cfg: ExperimentConfig, scale: SpaceScale) -> Coefficients:
    sigma, amp = cfg.sigma_value, cfg.g_amp_value
    if cfg.preset == "quadratic_unsafe":
        return quadratic_unsafe(scale, cfg.lam)
    if cfg.preset == "torus_example":
        return torus_example(scale, np.sin, sigma, cfg.lam, 1.0, amp)
    g = scale.from_function(lambda *xs: 1.0 + amp * np.cos(xs[0])) if amp else None
    if cfg.preset == "linear_g":
        drift = linear_drift(scale, cfg.drift_factor) if cfg.drift_factor else None
        return linear_coefficients(scale, cfg.lam, sigma, g, drift=drift, delta=cfg.delta)
    fn = parse_expression(cfg.f, (sympy.Symbol("u"),))
    f = lambda v: np.broadcast_to(fn(v), v.shape)
    return linear_coefficients(scale, cfg.lam, sigma, g, drift=pointwise(scale, f), delta=cfg.delta, name="custom")


# --------------------------------------------------------------------------
# output helpers


def output_dir(cfg: ExperimentConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    d = root / cfg.out
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _g(v: float) -> str:
    return f"{v:.17g}"


def _per_seed_dir(base: Path, cfg: ExperimentConfig, seed: int) -> Path:
    if cfg.seeds is None:
        return base
    d = base / f"seed_{seed}"
    d.mkdir(exist_ok=True)
    return d


def _map_seeds(fn, cfg: ExperimentConfig, jobs: int) -> list:
    seeds = cfg.seed_list
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, [cfg] * len(seeds), seeds))
    return [fn(cfg, s) for s in seeds]


# --------------------------------------------------------------------------
# commands


def _lift_one(cfg: ExperimentConfig, seed: int) -> tuple[int, float, float]:
    X = cfg.rough_path(seed)
    d = _per_seed_dir(output_dir(cfg), cfg, seed)
    rp.save(X, d / "path.csv", {"hurst": cfg.hurst, "n": cfg.n, "T": cfg.T, "seed": seed})
    Y = rp.load(d / "path.csv")
    return seed, rp.chen_defect(Y.second_order_table(), Y.x), rp.rho_alpha(Y)


def cmd_lift(cfg: ExperimentConfig, jobs: int = 1) -> int:
    for seed, defect, rho in _map_seeds(_lift_one, cfg, jobs):
        print(f"seed={seed} chen_defect={defect:.3e} rho_alpha={rho:.6g}")
    return EXIT_OK


def _solve_one(cfg: ExperimentConfig, seed: int) -> tuple[int, int, str]:
    scale = cfg.scale()
    coeffs = build_coefficients(cfg, scale)
    y0 = initial_condition(cfg, scale)
    X = cfg.rough_path(seed)
    scfg = cfg.solver_config()
    try:
        rec = global_solve(y0, coeffs, X, scfg)
    except BlowUpError as e:
        return seed, EXIT_BLOWUP, f"seed={seed} {e}"
    except PicardDivergenceError as e:
        return seed, EXIT_BLOWUP, f"seed={seed} {e}"
    res = mild_residual_profile(rec, coeffs, extra_depth=1)
    res0 = float(np.max(mild_residual_profile(rec, coeffs, extra_depth=0)))
    fit = apriori_monitor(rec)
    states = rec.base_states
    d = _per_seed_dir(output_dir(cfg), cfg, seed)
    rows = ["t,norm_gamma,norm_gamma_minus_alpha,residual"]
    ng = scale.norm(states, scfg.gamma)
    na = scale.norm(states, scfg.gamma - scfg.alpha)
    rows += [f"{_g(t)},{_g(a)},{_g(b)},{_g(r)}" for t, a, b, r in zip(rec.base_times, ng, na, res)]
    _write(d / "solution.csv", "\n".join(rows) + "\n")
    wrows = ["start,end,iters,contraction,gubinelli_norm"] + [w.csv_row() for w in rec.windows]
    _write(d / "windows.csv", "\n".join(wrows) + "\n")
    consts = {k: float(v) for k, v in rec.constants.items()}
    consts.update({k: float(v) for k, v in measured_constants(rec, coeffs).items()})
    consts.update({"M1": fit.M1, "M2": fit.M2, "apriori_ok": bool(fit.ok), "mild_residual": float(np.max(res)),
                   "mild_residual_solver_grid": res0, "picard_tol": scfg.picard_tol, "seed": seed})
    _write(d / "constants.json", _json(consts))
    msg = (f"seed={seed} windows={len(rec.windows)} C={consts['C']:.4g} M2={fit.M2:.4g} "
           f"mild_residual={res0:.3e} threshold={10 * scfg.picard_tol:.1e} refined_grid_residual={np.max(res):.3e}")
    return seed, EXIT_OK, msg


def cmd_solve(cfg: ExperimentConfig, jobs: int = 1) -> int:
    code = EXIT_OK
    for _, c, msg in _map_seeds(_solve_one, cfg, jobs):
        print(msg, file=sys.stderr if c else sys.stdout)
        code = max(code, c)
    return code


def converge_rows(cfg: ExperimentConfig, seed: int | None = None) -> tuple[list[str], bool]:
    """Sewing errors and rates per window depth, then geometric-oracle errors per solver depth.

    Rows are ordered by depth so a larger ``converge_depth`` only appends.
    """
    from .checks import geometric_oracle_error, sewing_scenario

    a = cfg.alpha_value
    X = cfg.rough_path(seed)
    p = sewing_scenario(X, cfg.scale(), cfg.gamma, cfg.lam)
    betas = (0.0, a, 2 * a)
    D = cfg.converge_depth
    probes = {b: sewing_error_probe(p, X, b, tuple(2**j for j in range(D + 1)), cfg.refine) for b in betas}
    rows, ok = [], True
    for j in range(D + 1):
        for b in betas:
            pr = probes[b]
            if j < len(pr.errors):
                rows.append(f"sewing_error,{_g(b)},{j},{_g(pr.errors[j])},")
        for b in betas:
            pr = probes[b]
            if 1 <= j < len(pr.errors):
                rate = float(np.polyfit(np.log(pr.window_lengths[: j + 1]), np.log(pr.errors[: j + 1]), 1)[0])
                rows.append(f"sewing_rate,{_g(b)},{j},{_g(rate)},{_g(pr.floor)}")
                if j == min(D, len(pr.errors) - 1):
                    ok &= rate >= pr.floor
        err = geometric_oracle_error(X, cfg.scale(), cfg.lam, j, cfg.gamma, cfg.picard_tol)
        rows.append(f"oracle_error,,{j},{_g(err)},")
    return rows, ok


def cmd_converge(cfg: ExperimentConfig, jobs: int = 1) -> int:
    rows, ok = converge_rows(cfg)
    _write(output_dir(cfg) / "rates.csv", "kind,beta,depth,value,floor\n" + "\n".join(rows) + "\n")
    for r in rows:
        if r.startswith("sewing_rate") or r.startswith("oracle"):
            print(r)
    if not ok:
        print("fitted sewing rate below its floor", file=sys.stderr)
    return EXIT_OK if ok else EXIT_PROBE


def cmd_cocycle(cfg: ExperimentConfig, jobs: int = 1) -> int:
    scale = cfg.scale()
    X = cfg.rough_path()
    try:
        d = cocycle_check(initial_condition(cfg, scale), build_coefficients(cfg, scale), X, float(cfg.tau),
                          cfg.solver_config())
    except (BlowUpError, PicardDivergenceError) as e:
        print(str(e), file=sys.stderr)
        return EXIT_BLOWUP
    _write(output_dir(cfg) / "cocycle.json", _json({"discrepancy": d, "tau": cfg.tau, "threshold": cfg.threshold}))
    print(f"cocycle discrepancy={d:.3e} threshold={cfg.threshold:.1e}")
    return EXIT_OK if d < cfg.threshold else EXIT_PROBE


def cmd_check(cfg: ExperimentConfig, jobs: int = 1, only: str | None = None) -> int:
    from .checks import run_all

    which = None if not only else [int(s) for s in only.split(",")]
    results = run_all(which, echo=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROBE


COMMANDS = {"lift": cmd_lift, "solve": cmd_solve, "converge": cmd_converge, "cocycle": cmd_cocycle,
            "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roughpde", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    types = _field_types()
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers across seeds")
        if name == "check":
            sp.add_argument("--only", help="comma-separated criterion numbers")
        for f, t in types.items():
            flag = "--" + f.replace("_", "-")
            if t is tuple:
                sp.add_argument(flag, dest=f, type=int, nargs="+")
            else:
                sp.add_argument(flag, dest=f, type=t)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    overrides = {f: getattr(args, f) for f in _field_types()}
    try:
        cfg = load_config(args.config, overrides)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "check":
            return cmd_check(cfg, args.jobs, args.only)
        return COMMANDS[args.command](cfg, args.jobs)
    except (ConfigError, rp.RoughPathError, SpectralError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O failure: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
