"""Interaction kernels H and G^l and sampling-based growth certificates.

Every catalog kernel is built from a scalar radial profile ``g(r)``:

* used as the follower-follower kernel, ``H(xi) = -g(|xi|) * xi`` (a central
  force; ``g > 0`` attracts, ``g < 0`` repels);
* used as the leader-follower family, ``G^l(xi) = g(|xi|) * e_l``.

Catalog profiles (``a`` is ``params[0]``, default 1):

============================  ===================  ==========================
kind                          g(r)                 as H
============================  ===================  ==========================
``zero``                      0                    0
``constant`` / ``linear``     a                    -a xi (linear attraction)
``attraction_repulsion``      a / (1 + r)          -a xi / (1 + |xi|)
``stokes_like``               a / (1 + r^2)        -a xi / (1 + |xi|^2)
``table``                     piecewise linear     user supplied
============================  ===================  ==========================

All profiles are bounded, so ``|K(xi)| <= sup|g| (1 + |xi|)`` in both roles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

CATALOG = ("zero", "constant", "linear", "attraction_repulsion", "stokes_like", "table")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    kind: str
    params: tuple[float, ...] = ()
    dim: int = 1
    radii: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in CATALOG:
            raise InputError(f"unknown kernel kind {self.kind!r}; expected one of {CATALOG}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InputError(f"kernel dimension must be a positive integer, got {self.dim}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == "table":
            if self.radii is None or self.values is None:
                raise InputError("table kernels need radii and values")
            radii = np.asarray(self.radii, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if radii.ndim != 1 or radii.shape != values.shape or radii.size < 2:
                raise InputError("table needs two equal-length columns with at least two rows")
            if np.any(np.diff(radii) <= 0) or radii[0] < 0:
                raise InputError("table radii must be nonnegative and strictly increasing")
            if not (np.all(np.isfinite(radii)) and np.all(np.isfinite(values))):
                raise InputError("table entries must be finite")
            object.__setattr__(self, "radii", radii)
            object.__setattr__(self, "values", values)

    @property
    def strength(self) -> float:
        return self.params[0] if self.params else 1.0

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "table":
            return not np.any(self.values)
        return self.strength == 0.0

    @property
    def growth_constant(self) -> float:
        """sup_r |g(r)|, the constant C in |K(xi)| <= C (1 + |xi|)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "table":
            return float(np.max(np.abs(self.values)))
        return abs(self.strength)

    @property
    def has_analytic_jacobian(self) -> bool:
        return self.kind != "table"


def zero(dim: int = 1) -> KernelSpec:
    return KernelSpec("zero", (), dim)


def load_table(path: str | Path, dim: int = 1) -> KernelSpec:
    """Read a two-column (radius, value) whitespace table with '#' comments."""
    try:
        data = np.loadtxt(path, comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read kernel table {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise InputError(f"kernel table {path} must have exactly two columns")
    return KernelSpec("table", (), dim, radii=data[:, 0], values=data[:, 1])


@dataclass(frozen=True)
class Kernels:
    """The pair (H, G) driving the followers."""

    h: KernelSpec
    g: KernelSpec

    def __post_init__(self):
        if self.h.dim != self.g.dim:
            raise InputError(f"H has dim {self.h.dim} but G has dim {self.g.dim}")

    @property
    def dim(self) -> int:
        return self.h.dim

    @classmethod
    def zero(cls, dim: int = 1) -> "Kernels":
        return cls(zero(dim), zero(dim))


def profile(spec: KernelSpec, r):
    r = np.asarray(r, dtype=float)
    kind = spec.kind
    a = spec.strength
    if kind == "zero":
        return np.zeros_like(r)
    if kind in ("constant", "linear"):
        return np.full_like(r, a)
    if kind == "attraction_repulsion":
        return a / (1.0 + r)
    if kind == "stokes_like":
        return a / (1.0 + r * r)
    return np.interp(r, spec.radii, spec.values)


def profile_derivative(spec: KernelSpec, r):
    r = np.asarray(r, dtype=float)
    kind = spec.kind
    a = spec.strength
    if kind in ("zero", "constant", "linear"):
        return np.zeros_like(r)
    if kind == "attraction_repulsion":
        return -a / (1.0 + r) ** 2
    if kind == "stokes_like":
        return -2.0 * a * r / (1.0 + r * r) ** 2
    raise InputError("table kernels have no analytic profile derivative")


def _check_xi(spec: KernelSpec, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0 or xi.shape[-1] != spec.dim:
        raise InputError(f"expected points in R^{spec.dim}, got shape {xi.shape}")
    return xi


def _check_ell(spec: KernelSpec, ell: int) -> int:
    if not 1 <= ell <= spec.dim:
        raise InputError(f"direction index {ell} out of range 1..{spec.dim}")
    return ell - 1


def eval_h(spec: KernelSpec, xi) -> np.ndarray:
    """H(xi) for one point or a batch of shape (..., d)."""
    xi = _check_xi(spec, xi)
    if spec.kind == "zero":
        return np.zeros_like(xi)
    r = np.linalg.norm(xi, axis=-1)
    return -profile(spec, r)[..., None] * xi


def eval_g(spec: KernelSpec, ell: int, xi) -> np.ndarray:
    """G^ell(xi); ``ell`` is 1-based like the direction index it names."""
    col = _check_ell(spec, ell)
    xi = _check_xi(spec, xi)
    out = np.zeros_like(xi)
    if spec.kind != "zero":
        out[..., col] = profile(spec, np.linalg.norm(xi, axis=-1))
    return out


def _fd_jacobian(fun, xi: np.ndarray) -> np.ndarray:
    d = xi.shape[-1]
    h = 1e-5 * (1.0 + np.linalg.norm(xi, axis=-1))[..., None]
    jac = np.empty(xi.shape + (d,))
    for b in range(d):
        step = np.zeros_like(xi)
        step[..., b] = h[..., 0]
        jac[..., :, b] = (fun(xi + step) - fun(xi - step)) / (2.0 * h)
    return jac


def jacobian_h(spec: KernelSpec, xi) -> np.ndarray:
    """dH/dxi, shape (..., d, d); row a, column b is dH_a/dxi_b."""
    xi = _check_xi(spec, xi)
    d = spec.dim
    if spec.kind == "zero":
        return np.zeros(xi.shape + (d,))
    if not spec.has_analytic_jacobian:
        return _fd_jacobian(lambda z: eval_h(spec, z), xi)
    r = np.linalg.norm(xi, axis=-1)
    g = profile(spec, r)
    dg = profile_derivative(spec, r)
    # g'(r)/r * xi xi^T vanishes at the origin since |xi xi^T| / r = r
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = np.where(r > 0, dg / np.where(r > 0, r, 1.0), 0.0)
    jac = -g[..., None, None] * np.eye(d) - coef[..., None, None] * xi[..., :, None] * xi[..., None, :]
    return jac


def jacobian_g(spec: KernelSpec, ell: int, xi) -> np.ndarray:
    """dG^ell/dxi, shape (..., d, d)."""
    col = _check_ell(spec, ell)
    xi = _check_xi(spec, xi)
    d = spec.dim
    jac = np.zeros(xi.shape + (d,))
    if spec.kind == "zero":
        return jac
    if not spec.has_analytic_jacobian:
        return _fd_jacobian(lambda z: eval_g(spec, ell, z), xi)
    r = np.linalg.norm(xi, axis=-1)
    dg = profile_derivative(spec, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = np.where(r > 0, dg / np.where(r > 0, r, 1.0), 0.0)
    jac[..., col, :] = coef[..., None] * xi
    return jac


@dataclass(frozen=True)
class GrowthCertificate:
    kind: str
    role: str
    constant: float
    n_samples: int
    radius: float
    max_ratio: float
    lipschitz_estimate: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.constant * (1.0 + 1e-12)


def sample_ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal((n, dim))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    rho = radius * rng.random((n, 1)) ** (1.0 / dim)
    return direction / norms * rho


def _role_values(spec: KernelSpec, role: str, xi: np.ndarray) -> np.ndarray:
    """Stack of kernel values, shape (n, n_fields, d)."""
    if role == "h":
        return eval_h(spec, xi)[:, None, :]
    if role == "g":
        return np.stack([eval_g(spec, ell, xi) for ell in range(1, spec.dim + 1)], axis=1)
    raise InputError(f"role must be 'h' or 'g', got {role!r}")


def certify_growth(spec: KernelSpec, radius: float, n_samples: int, seed: int, role: str = "h") -> GrowthCertificate:
    """Check |K(xi)| <= C (1 + |xi|) on ``n_samples`` points of B(0, radius).

    Also reports the largest difference quotient over consecutive sample
    pairs, an empirical local Lipschitz constant on the ball.
    """
    if not radius > 0:
        raise InputError(f"radius must be positive, got {radius}")
    if n_samples < 1:
        raise InputError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    xi = sample_ball(rng, n_samples, spec.dim, radius)
    vals = _role_values(spec, role, xi)
    norms = np.linalg.norm(vals, axis=-1).max(axis=1)
    max_ratio = float(np.max(norms / (1.0 + np.linalg.norm(xi, axis=1))))
    lip = 0.0
    if n_samples >= 2:
        dk = np.linalg.norm(vals[1:] - vals[:-1], axis=-1).max(axis=1)
        dx = np.linalg.norm(xi[1:] - xi[:-1], axis=1)
        ok = dx > 0
        if np.any(ok):
            lip = float(np.max(dk[ok] / dx[ok]))
    return GrowthCertificate(spec.kind, role, spec.growth_constant, n_samples, float(radius), max_ratio, lip)
