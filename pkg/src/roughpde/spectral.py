"""Spectral Sobolev scale on the torus T^d = [0, 2*pi)^d.

A field is stored by its Fourier coefficients ``u_k`` for ``|k_j| <= N``,
centred so that index ``N + k`` holds mode ``k``; ``u(x) = sum_k u_k e^{i k.x}``.

The regularity index ``gamma`` follows the convention B_gamma = H^{2 gamma}:

    |u|_gamma**2 = sum_k (1 + |k|^2)**(2*gamma) * |u_k|**2

and the generator is ``A = Laplacian - mass * Id`` with symbol
``-(|k|^2 + mass)``.  Every operator here is a Fourier multiplier except
:func:`multiply_smooth`, which goes through a dealiased collocation grid.

Most functions accept plain coefficient arrays with arbitrary leading batch
axes (time-indexed families) as well as :class:`SpectralField` values.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class SpectralError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralField:
    coeffs: np.ndarray
    dim: int
    cutoff: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).copy()
        shape = (2 * self.cutoff + 1,) * self.dim
        if c.shape != shape:
            raise SpectralError(f"coefficient array {c.shape} does not match dim={self.dim}, cutoff={self.cutoff}")
        if not np.all(np.isfinite(c)):
            raise SpectralError("field coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def _like(self, coeffs) -> "SpectralField":
        return SpectralField(coeffs, self.dim, self.cutoff)

    def _check(self, other: "SpectralField") -> None:
        if (self.dim, self.cutoff) != (other.dim, other.cutoff):
            raise SpectralError(
                f"field shape mismatch: (dim={self.dim}, N={self.cutoff}) vs (dim={other.dim}, N={other.cutoff})"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, a) -> "SpectralField":
        return self._like(self.coeffs * a)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self._like(-self.coeffs)

    def is_real(self, tol: float = 0.0) -> bool:
        """Conjugate symmetry ``u_{-k} == conj(u_k)``."""
        flipped = self.coeffs[(slice(None, None, -1),) * self.dim]
        return bool(np.max(np.abs(flipped - np.conj(self.coeffs)), initial=0.0) <= tol)


class SpaceScale:
    """The family (B_gamma) for a fixed dimension, cutoff and mass shift."""

    def __init__(self, dim: int = 1, cutoff: int = 8, mass: float = 0.0):
        if dim < 1 or cutoff < 0:
            raise SpectralError(f"need dim >= 1 and cutoff >= 0, got dim={dim}, cutoff={cutoff}")
        if mass < 0:
            raise SpectralError(f"mass shift must be non-negative, got {mass}")
        self.dim = int(dim)
        self.cutoff = int(cutoff)
        self.mass = float(mass)

    def __repr__(self) -> str:
        return f"SpaceScale(dim={self.dim}, cutoff={self.cutoff}, mass={self.mass:g})"

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.cutoff + 1,) * self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        k = np.arange(-self.cutoff, self.cutoff + 1)
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij"))

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(kk.astype(float) ** 2 for kk in self.wavenumbers)

    @cached_property
    def rate(self) -> np.ndarray:
        """Decay rate ``|k|^2 + mass`` of each mode under the semigroup."""
        return self.ksq + self.mass

    def weight(self, gamma: float) -> np.ndarray:
        return (1.0 + self.ksq) ** (2.0 * gamma)

    def norm(self, u, gamma: float):
        """|u|_gamma; batched over leading axes of a coefficient array."""
        c = u.coeffs if isinstance(u, SpectralField) else np.asarray(u)
        sq = np.sum(self.weight(gamma) * (c.real**2 + c.imag**2), axis=self.axes)
        return np.sqrt(sq)

    def field(self, coeffs) -> SpectralField:
        return SpectralField(coeffs, self.dim, self.cutoff)

    def zeros(self) -> SpectralField:
        return self.field(np.zeros(self.shape, dtype=complex))

    def mode(self, k, amplitude: complex = 1.0) -> SpectralField:
        k = (k,) if np.isscalar(k) else tuple(k)
        if len(k) != self.dim or max(abs(int(kk)) for kk in k) > self.cutoff:
            raise SpectralError(f"mode {k} not representable with dim={self.dim}, cutoff={self.cutoff}")
        c = np.zeros(self.shape, dtype=complex)
        c[tuple(self.cutoff + int(kk) for kk in k)] = amplitude
        return self.field(c)

    def random_field(self, rng: np.random.Generator, decay: float = 1.0, real: bool = True) -> SpectralField:
        """Random field with coefficient sizes ~ (1 + |k|^2)^(-decay)."""
        c = (rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)) * (1.0 + self.ksq) ** (-decay)
        if real:
            c = 0.5 * (c + np.conj(c[(slice(None, None, -1),) * self.dim]))
        return self.field(c)

    # collocation transforms

    def collocation_size(self, points: int | None = None) -> int:
        m = 3 * self.cutoff + 1 if points is None else int(points)
        if m < 2 * self.cutoff + 1:
            raise SpectralError(f"{m} collocation points cannot resolve cutoff {self.cutoff}")
        return m

    def _slots(self, m: int):
        idx = np.arange(-self.cutoff, self.cutoff + 1) % m
        return np.ix_(*([idx] * self.dim))

    def to_grid(self, u, points: int | None = None) -> np.ndarray:
        """Values on the uniform grid ``x_j = 2*pi*j/m`` (complex, batched)."""
        c = u.coeffs if isinstance(u, SpectralField) else np.asarray(u)
        m = self.collocation_size(points)
        lead = c.shape[: c.ndim - self.dim]
        full = np.zeros(lead + (m,) * self.dim, dtype=complex)
        full[(Ellipsis,) + self._slots(m)] = c
        return np.fft.ifftn(full, axes=self.axes) * m**self.dim

    def from_grid(self, values) -> np.ndarray:
        """Fourier coefficients of grid values, truncated to the cutoff."""
        v = np.asarray(values)
        m = v.shape[-1]
        full = np.fft.fftn(v, axes=self.axes) / m**self.dim
        return full[(Ellipsis,) + self._slots(m)]

    def grid_points(self, points: int | None = None) -> tuple[np.ndarray, ...]:
        m = self.collocation_size(points)
        x = 2.0 * np.pi * np.arange(m) / m
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def from_function(self, f, points: int | None = None) -> SpectralField:
        """Truncated Fourier projection of a function sampled on the collocation grid."""
        xs = self.grid_points(points)
        return self.field(self.from_grid(np.asarray(f(*xs), dtype=complex)))


def norm_gamma(u: SpectralField, gamma: float, scale: SpaceScale | None = None) -> float:
    scale = scale or SpaceScale(u.dim, u.cutoff)
    return float(scale.norm(u, gamma))


def interpolation_check(u: SpectralField, theta: float, beta: float, gamma: float) -> tuple[float, float]:
    """Both sides of ``|u|_beta^(gamma-theta) <= |u|_theta^(gamma-beta) |u|_gamma^(beta-theta)``."""
    if not theta <= beta <= gamma:
        raise SpectralError(f"need theta <= beta <= gamma, got ({theta}, {beta}, {gamma})")
    scale = SpaceScale(u.dim, u.cutoff)
    nt, nb, ng = (float(scale.norm(u, g)) for g in (theta, beta, gamma))
    return nb ** (gamma - theta), nt ** (gamma - beta) * ng ** (beta - theta)


def semigroup_apply(u, t: float, scale: SpaceScale):
    """``S(t) u``: each mode times ``exp(-t(|k|^2 + mass))``."""
    if t < 0:
        raise SpectralError(f"semigroup time must be non-negative, got {t}")
    factor = np.exp(-t * scale.rate)
    if isinstance(u, SpectralField):
        return u._like(u.coeffs * factor)
    return np.asarray(u) * factor


@dataclass(frozen=True)
class SemigroupBoundReport:
    sigma: float
    gamma: float
    increment_constant: float
    smoothing_constant: float
    smoothing_argmax_t: float


def verify_sg_bounds(scale: SpaceScale, gamma: float, sigma: float, t_grid) -> SemigroupBoundReport:
    """Empirical constants of the two smoothing bounds over all scale modes.

    increment: sup (1 - e^{-t a_k}) / (t^sigma (1+|k|^2)^sigma)
    smoothing: sup t^sigma (1+|k|^2)^sigma e^{-t a_k}

    Per mode both ratios are independent of ``gamma``.
    """
    if not 0.0 <= sigma <= 1.0:
        raise SpectralError(f"sigma must lie in [0, 1], got {sigma}")
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0 or np.any(t <= 0):
        raise SpectralError("t-grid must be non-empty and strictly positive")
    ksq = np.unique(scale.ksq)
    a = ksq + scale.mass
    tt = t[:, None]
    gain = (tt * (1.0 + ksq[None, :])) ** sigma
    inc = -np.expm1(-tt * a[None, :]) / gain
    smooth = gain * np.exp(-tt * a[None, :])
    per_t = smooth.max(axis=1)
    j = int(np.argmax(per_t))
    return SemigroupBoundReport(sigma, gamma, float(inc.max()), float(per_t[j]), float(t[j]))


def frac_laplacian(u, sigma: float, scale: SpaceScale | None = None):
    """``(-Laplacian)^sigma``: mode k times ``|k|^(2 sigma)``."""
    if sigma < 0:
        raise SpectralError(f"sigma must be non-negative, got {sigma}")
    if isinstance(u, SpectralField):
        scale = scale or SpaceScale(u.dim, u.cutoff)
        return u._like(u.coeffs * fractional_symbol(scale, sigma))
    return np.asarray(u) * fractional_symbol(scale, sigma)


def fractional_symbol(scale: SpaceScale, sigma: float) -> np.ndarray:
    if sigma == 0:
        return np.ones(scale.shape)
    return scale.ksq**sigma


def multiply_smooth(u, g, scale: SpaceScale | None = None):
    """Dealiased pointwise product, truncated back to the cutoff."""
    if isinstance(u, SpectralField):
        if not isinstance(g, SpectralField):
            raise SpectralError("multiply_smooth expects two SpectralFields")
        u._check(g)
        scale = scale or SpaceScale(u.dim, u.cutoff)
        return u._like(_product(u.coeffs, g.coeffs, scale))
    return _product(np.asarray(u), g.coeffs if isinstance(g, SpectralField) else np.asarray(g), scale)


def _product(a: np.ndarray, b: np.ndarray, scale: SpaceScale) -> np.ndarray:
    if a.shape[a.ndim - scale.dim :] != scale.shape or b.shape[b.ndim - scale.dim :] != scale.shape:
        raise SpectralError(f"shape mismatch in product: {a.shape} and {b.shape} for {scale!r}")
    return scale.from_grid(scale.to_grid(a) * scale.to_grid(b))


def save_field(u: SpectralField, path) -> None:
    scale = SpaceScale(u.dim, u.cutoff)
    lines = ["dim,cutoff", f"{u.dim},{u.cutoff}", ",".join([f"k{j + 1}" for j in range(u.dim)] + ["re", "im"])]
    ks = [kk.ravel() for kk in scale.wavenumbers]
    flat = u.coeffs.ravel()
    for i in range(flat.size):
        row = [str(int(kk[i])) for kk in ks] + [f"{flat[i].real:.17g}", f"{flat[i].imag:.17g}"]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_field(path) -> SpectralField:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    dim, cutoff = (int(v) for v in rows[1].split(","))
    scale = SpaceScale(dim, cutoff)
    c = np.zeros(scale.shape, dtype=complex)
    for line in rows[3:]:
        if not line.strip():
            continue
        parts = line.split(",")
        k = tuple(cutoff + int(v) for v in parts[:dim])
        c[k] = complex(float(parts[dim]), float(parts[dim + 1]))
    return scale.field(c)


def export_collocation(u: SpectralField, path, points: int | None = None) -> None:
    """CSV of ``x_1,...,x_d,u(x)`` (real part) on the collocation grid."""
    scale = SpaceScale(u.dim, u.cutoff)
    vals = scale.to_grid(u, points).real.ravel()
    xs = [x.ravel() for x in scale.grid_points(points)]
    header = ",".join([f"x{j + 1}" for j in range(u.dim)] + ["u"])
    lines = [header]
    for i in range(vals.size):
        lines.append(",".join([f"{x[i]:.17g}" for x in xs] + [f"{vals[i]:.17g}"]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
