"""Atomic measures, kernel convolutions and the Wasserstein-1 distance.

The W1 solver is chosen by input shape and is exact in every case:

* d = 1: quantile coupling (sorted matching for equal-size uniform clouds,
  otherwise the integral of |F_mu - F_nu| over the merged support);
* d >= 2, equal-size uniform clouds: optimal assignment;
* d >= 2, general weights: the transport linear program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .errors import DomainError, InputError, NumericalError
from .kernels import KernelSpec, eval_g, eval_h

_MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    atoms: np.ndarray
    weights: np.ndarray
    kind: str = "probability"

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise InputError(f"atoms must have shape (n, d) with n >= 1, got {atoms.shape}")
        if weights.size != atoms.shape[0]:
            raise InputError(f"{atoms.shape[0]} atoms but {weights.size} weights")
        if self.kind not in ("probability", "signed"):
            raise InputError(f"kind must be 'probability' or 'signed', got {self.kind!r}")
        if self.kind == "probability":
            if np.any(weights < 0):
                raise InputError("probability measures need nonnegative weights")
            if abs(weights.sum() - 1.0) > _MASS_TOL:
                raise InputError(f"probability weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def integrate(self, fn) -> float:
        """sum_j w_j fn(atom_j) for a scalar function evaluated on the atom array."""
        return float(np.dot(self.weights, fn(self.atoms)))

    def to_csv(self, path) -> None:
        write_measure_csv(path, self)


def empirical_from_followers(X) -> WeightedMeasure:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 1:
        raise InputError("need at least one follower")
    return WeightedMeasure(X, np.full(n, 1.0 / n), "probability")


def leader_control_measure(Y, u, ell: int) -> WeightedMeasure:
    """(1/m) sum_k u_{k,ell} delta_{Y_k}; ``ell`` is 1-based."""
    Y = np.asarray(Y, dtype=float)
    u = np.asarray(u, dtype=float)
    if Y.ndim != 2 or u.shape != Y.shape:
        raise InputError(f"leaders {Y.shape} and controls {u.shape} must both be (m, d)")
    if not 1 <= ell <= Y.shape[1]:
        raise InputError(f"direction index {ell} out of range 1..{Y.shape[1]}")
    return WeightedMeasure(Y, u[:, ell - 1] / Y.shape[0], "signed")


def convolve(kernel: KernelSpec, mu: WeightedMeasure, x, ell: int | None = None) -> np.ndarray:
    """(K * mu)(x) = sum_j w_j K(x - atom_j), with K = H or, if ``ell`` is given, G^ell.

    ``x`` may be a single point (d,) or a batch (n, d).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != mu.dim or kernel.dim != mu.dim:
        raise InputError(f"dimension mismatch: x {x.shape}, measure d={mu.dim}, kernel d={kernel.dim}")
    diff = x[..., None, :] - mu.atoms
    vals = eval_h(kernel, diff) if ell is None else eval_g(kernel, ell, diff)
    return np.einsum("...jd,j->...d", vals, mu.weights)


def _check_transport_pair(mu: WeightedMeasure, nu: WeightedMeasure) -> None:
    if mu.kind != "probability" or nu.kind != "probability":
        raise DomainError("W1 is only defined here for probability measures")
    if mu.dim != nu.dim:
        raise InputError(f"measures live in R^{mu.dim} and R^{nu.dim}")
    if abs(mu.mass - nu.mass) > 1e-9:
        raise DomainError(f"mass mismatch: {mu.mass!r} vs {nu.mass!r}")


def _w1_line(mu: WeightedMeasure, nu: WeightedMeasure) -> float:
    a = mu.atoms[:, 0]
    b = nu.atoms[:, 0]
    if mu.size == nu.size and mu.is_uniform and nu.is_uniform:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    pts = np.concatenate([a, b])
    signed = np.concatenate([mu.weights, -nu.weights])
    order = np.argsort(pts, kind="stable")
    cdf_gap = np.cumsum(signed[order])[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(pts[order])))


def wasserstein1_assignment(mu: WeightedMeasure, nu: WeightedMeasure) -> float:
    """W1 between equal-size uniform clouds by optimal assignment (any d)."""
    _check_transport_pair(mu, nu)
    if mu.size != nu.size or not (mu.is_uniform and nu.is_uniform):
        raise DomainError("assignment needs two equal-size uniform clouds")
    cost = cdist(mu.atoms, nu.atoms)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def wasserstein1_lp(mu: WeightedMeasure, nu: WeightedMeasure) -> float:
    """W1 by the transport linear program (any weights, any d)."""
    _check_transport_pair(mu, nu)
    n, k = mu.size, nu.size
    cost = cdist(mu.atoms, nu.atoms).ravel()
    a_rows = np.kron(np.eye(n), np.ones((1, k)))
    a_cols = np.kron(np.ones((1, n)), np.eye(k))
    res = linprog(cost, A_eq=np.vstack([a_rows, a_cols]),
                  b_eq=np.concatenate([mu.weights, nu.weights * (mu.mass / nu.mass)]),
                  bounds=(0, None), method="highs")
    if not res.success:
        raise NumericalError(f"transport LP failed: {res.message}")
    return float(max(res.fun, 0.0))


def _canonical_key(mu: WeightedMeasure) -> tuple:
    return (mu.size, mu.atoms.tobytes(), mu.weights.tobytes())


def wasserstein1(mu: WeightedMeasure, nu: WeightedMeasure) -> float:
    _check_transport_pair(mu, nu)
    # a fixed argument order makes the result bitwise symmetric whatever the solver
    if _canonical_key(nu) < _canonical_key(mu):
        mu, nu = nu, mu
    if mu.dim == 1:
        return _w1_line(mu, nu)
    if mu.size == nu.size and mu.is_uniform and nu.is_uniform:
        return wasserstein1_assignment(mu, nu)
    return wasserstein1_lp(mu, nu)


def chi_distance(a: tuple, b: tuple) -> float:
    """(1/m) sum_k |Y_k - Y'_k| + W1(mu, mu') for pairs (Y, mu)."""
    Y1, mu1 = a
    Y2, mu2 = b
    Y1 = np.asarray(Y1, dtype=float)
    Y2 = np.asarray(Y2, dtype=float)
    if Y1.shape != Y2.shape:
        raise InputError(f"leader sets differ in shape: {Y1.shape} vs {Y2.shape}")
    leader_part = float(np.linalg.norm(Y1 - Y2, axis=-1).mean()) if Y1.size else 0.0
    return leader_part + wasserstein1(mu1, mu2)


def support_radius(mu: WeightedMeasure) -> float:
    return float(np.max(np.linalg.norm(mu.atoms, axis=1)))


def write_measure_csv(path, mu: WeightedMeasure) -> None:
    header = ",".join(["w"] + [f"x_{a}" for a in range(1, mu.dim + 1)])
    np.savetxt(path, np.column_stack([mu.weights, mu.atoms]), delimiter=",",
               header=header, comments="", fmt="%.17g")


def read_measure_csv(path, kind: str | None = None) -> WeightedMeasure:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    w, atoms = data[:, 0], data[:, 1:]
    if kind is None:
        kind = "probability" if np.all(w >= 0) and abs(w.sum() - 1.0) <= _MASS_TOL else "signed"
    return WeightedMeasure(atoms, w, kind)
