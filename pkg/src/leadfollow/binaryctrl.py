"""One-step (instantaneous) optimal feedback for pairs of agents.

A pair (x_i, x_j) makes one half-step of the binary dynamics

    x_i^1 = x_i + (dt/2) [ H(x_i - x_j)(1 - t_i)(1 - t_j) + sum_l G^l(x_i - x_j) u_jl (1 - t_i) t_j + u_i t_i ]

and symmetrically for j, where t_i, t_j are the control bits. The controller
works in expectation mode: the bits are replaced by their Bernoulli(p)
moments, so x^1 = A u + b is affine in u = (u_i, u_j) with

    A = (dt/2) [[p I, p(1-p) Gm_ij], [p(1-p) Gm_ji, p I]],   Gm_ij[:, l] = G^l(x_i - x_j).

Minimizing (beta/2)|xbar - x^1|^2 + gamma |u|^2 gives D u = C with
D = 2 gamma I + beta A^T A and C = beta A^T (xbar - b). The unconstrained
solution is then clamped agent by agent onto the ball |u| <= u_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .kernels import Kernels, eval_g, eval_h
from .kinetic import KineticEnsemble, binary_interaction, draw_pairs, limit_kernel, step_rng
from .microdynamics import project_ball

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class BinaryPair:
    """Two agents plus their control bits; ``mode="expectation"`` averages the bits with probability p."""

    xi: np.ndarray
    xj: np.ndarray
    theta_i: float = 0.0
    theta_j: float = 0.0
    mode: str = "sampled"
    p: float = 0.0

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        xj = np.atleast_1d(np.asarray(self.xj, dtype=float))
        if xi.shape != xj.shape or xi.ndim != 1:
            raise InputError(f"pair coordinates must be two vectors of equal length, got {xi.shape}, {xj.shape}")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(xj))):
            raise InputError("pair coordinates must be finite")
        if self.mode not in ("sampled", "expectation"):
            raise InputError(f"mode must be 'sampled' or 'expectation', got {self.mode!r}")
        if not 0.0 <= self.p <= 1.0:
            raise InputError(f"p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "xj", xj)

    @property
    def dim(self) -> int:
        return self.xi.size


@dataclass(frozen=True)
class InstantaneousProblem:
    target: tuple
    gamma: float
    beta: float
    dt: float
    p: float
    u_max: float = math.inf

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError(f"gamma must be positive, got {self.gamma}")
        if not self.dt > 0:
            raise InputError(f"dt must be positive, got {self.dt}")
        if not 0.0 < self.beta <= 1.0:
            raise InputError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 <= self.p <= 1.0:
            raise InputError(f"p must lie in [0, 1], got {self.p}")
        if self.u_max < 0:
            raise InputError("u_max must be nonnegative")
        object.__setattr__(self, "target", tuple(np.atleast_1d(np.asarray(self.target, dtype=float)).tolist()))

    @classmethod
    def discounted(cls, target, gamma: float, rate: float, dt: float, p: float, u_max: float = math.inf):
        """Build the problem from a continuous discount rate: beta = exp(-rate dt)."""
        return cls(target, gamma, math.exp(-rate * dt), dt, p, u_max)

    @property
    def target_point(self) -> np.ndarray:
        return np.asarray(self.target, dtype=float)


def discrete_binary_step(pair: BinaryPair, u_i, u_j, dt: float, kernels: Kernels) -> BinaryPair:
    """Advance the pair by one half-weighted binary step."""
    u_i = np.asarray(u_i, dtype=float)
    u_j = np.asarray(u_j, dtype=float)
    alpha = dt / 2.0
    if pair.mode == "sampled":
        xi = binary_interaction(pair.xi, pair.xj, pair.theta_i, pair.theta_j, u_i, u_j, alpha, kernels)
        xj = binary_interaction(pair.xj, pair.xi, pair.theta_j, pair.theta_i, u_j, u_i, alpha, kernels)
    else:
        xi = pair.xi + alpha * limit_kernel(pair.xi, pair.xj, u_i, u_j, pair.p, kernels)
        xj = pair.xj + alpha * limit_kernel(pair.xj, pair.xi, u_j, u_i, pair.p, kernels)
    return BinaryPair(xi, xj, pair.theta_i, pair.theta_j, pair.mode, pair.p)


def _g_matrix(kernels: Kernels, xi: np.ndarray) -> np.ndarray:
    """Batch of matrices whose column l is G^l(xi); shape (..., d, d)."""
    d = xi.shape[-1]
    return np.stack([eval_g(kernels.g, ell, xi) for ell in range(1, d + 1)], axis=-1)


def _assemble_batch(xi: np.ndarray, xj: np.ndarray, prob: InstantaneousProblem, kernels: Kernels):
    """D (P, 2d, 2d) and C (P, 2d) for P pairs in expectation mode."""
    P, d = xi.shape
    p = prob.p
    q = 1.0 - p
    half = prob.dt / 2.0
    eye = np.eye(d)
    A = np.zeros((P, 2 * d, 2 * d))
    A[:, :d, :d] = half * p * eye
    A[:, d:, d:] = half * p * eye
    A[:, :d, d:] = half * (p * q) * _g_matrix(kernels, xi - xj)
    A[:, d:, :d] = half * (p * q) * _g_matrix(kernels, xj - xi)
    b = np.concatenate([xi + half * (q * q) * eval_h(kernels.h, xi - xj),
                        xj + half * (q * q) * eval_h(kernels.h, xj - xi)], axis=-1)
    At = np.swapaxes(A, -1, -2)
    D = 2.0 * prob.gamma * np.eye(2 * d) + prob.beta * At @ A
    D = 0.5 * (D + np.swapaxes(D, -1, -2))
    target = np.tile(prob.target_point, 2)
    C = prob.beta * np.einsum("pab,pb->pa", At, target - b)
    return D, C


def _check_pair(pair: BinaryPair, prob: InstantaneousProblem, kernels: Kernels) -> None:
    if pair.dim != prob.target_point.size or pair.dim != kernels.dim:
        raise InputError("pair, target and kernels must share one dimension")


def assemble_instantaneous_system(pair: BinaryPair, prob: InstantaneousProblem, kernels: Kernels):
    """(D, C) of the stationarity system of the one-step objective."""
    _check_pair(pair, prob, kernels)
    D, C = _assemble_batch(pair.xi[None], pair.xj[None], prob, kernels)
    return D[0], C[0]


def _solve_batch(D: np.ndarray, C: np.ndarray, u_max: float) -> np.ndarray:
    cond = np.linalg.cond(D)
    if np.any(~np.isfinite(cond)) or np.any(cond > COND_LIMIT):
        raise NumericalError(f"instantaneous system is ill-conditioned (cond = {float(np.max(cond)):.3g})")
    u = np.linalg.solve(D, C[..., None])[..., 0]
    d = u.shape[-1] // 2
    return project_ball(u.reshape(u.shape[:-1] + (2, d)), u_max)


def solve_feedback(pair: BinaryPair, prob: InstantaneousProblem, kernels: Kernels) -> tuple[np.ndarray, np.ndarray]:
    """Projected solution (u_i, u_j) of the instantaneous problem."""
    D, C = assemble_instantaneous_system(pair, prob, kernels)
    u = _solve_batch(D[None], C[None], prob.u_max)[0]
    return u[0], u[1]


def instantaneous_objective(pair: BinaryPair, u_i, u_j, prob: InstantaneousProblem, kernels: Kernels) -> float:
    """(beta/2)|xbar - x^1|^2 + gamma (|u_i|^2 + |u_j|^2) with x^1 from the binary step."""
    nxt = discrete_binary_step(pair, u_i, u_j, prob.dt, kernels)
    xbar = prob.target_point
    gap = np.sum((xbar - nxt.xi) ** 2) + np.sum((xbar - nxt.xj) ** 2)
    return float(0.5 * prob.beta * gap + prob.gamma * (np.sum(np.asarray(u_i) ** 2) + np.sum(np.asarray(u_j) ** 2)))


@dataclass(frozen=True, eq=False)
class FeedbackRun:
    times: np.ndarray
    snapshots: np.ndarray
    state_cost: np.ndarray
    control_cost: np.ndarray
    control_energy: np.ndarray
    cumulative: np.ndarray
    discount: np.ndarray

    @property
    def realized_cost(self) -> float:
        return float(self.cumulative[-1]) if self.cumulative.size else 0.0

    @property
    def discounted_state_cost(self) -> float:
        return float(np.sum(self._weights() * self.state_cost))

    @property
    def discounted_control_energy(self) -> float:
        return float(np.sum(self._weights() * self.control_energy))

    def _weights(self) -> np.ndarray:
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 0.0
        return dt * self.discount

    def to_csv(self, path) -> None:
        write_feedback_csv(path, self)


def feedback_boltzmann_run(ens0: KineticEnsemble, prob: InstantaneousProblem, kernels: Kernels, T: float,
                           control: bool = True) -> FeedbackRun:
    """Binary-interaction Monte Carlo where every pair applies its own instantaneous feedback.

    Each step pairs all agents (eta dt = 1), computes the expectation-mode
    feedback for every pair and applies the sampled binary step with the
    agents' bits. With ``control=False`` the same pairs and bits are used
    with u = 0, which gives the paired uncontrolled reference.
    """
    dt = prob.dt
    n_steps = int(round(T / dt))
    if n_steps < 1 or not math.isclose(n_steps * dt, T, rel_tol=1e-9):
        raise InputError(f"dt={dt} does not divide T={T}")
    if ens0.dim != prob.target_point.size or ens0.dim != kernels.dim:
        raise InputError("ensemble, target and kernels must share one dimension")
    xbar = prob.target_point
    X = ens0.samples.copy()
    M, d = X.shape
    snaps = [X.copy()]
    state = np.empty(n_steps)
    energy = np.empty(n_steps)
    for n in range(n_steps):
        rng = step_rng(ens0.seed, ens0.step + n)
        first, second = draw_pairs(rng, M, 1.0)
        bits = (rng.random(M) < ens0.p).astype(float)
        u = np.zeros_like(X)
        if control and first.size:
            sol = _solve_batch(*_assemble_batch(X[first], X[second], prob, kernels), prob.u_max)
            u[first], u[second] = sol[:, 0], sol[:, 1]
        state[n] = float(np.mean(np.sum((xbar - X) ** 2, axis=1)))
        energy[n] = float(np.mean(np.sum(u * u, axis=1)))
        nxt = X.copy()
        if first.size:
            a, b = X[first], X[second]
            nxt[first] = binary_interaction(a, b, bits[first], bits[second], u[first], u[second], dt / 2.0, kernels)
            nxt[second] = binary_interaction(b, a, bits[second], bits[first], u[second], u[first], dt / 2.0, kernels)
        X = nxt
        snaps.append(X.copy())
    discount = prob.beta ** np.arange(n_steps)
    control_cost = prob.gamma * energy
    cumulative = np.cumsum(discount * dt * (state + control_cost))
    return FeedbackRun(ens0.time + dt * np.arange(n_steps + 1), np.stack(snaps), state, control_cost, energy,
                       cumulative, discount)


def write_feedback_csv(path, run: FeedbackRun) -> None:
    with open(path, "w") as fh:
        fh.write("t,state_cost,control_cost,cumulative_discounted_cost\n")
        for t, s, c, cum in zip(run.times[:-1], run.state_cost, run.control_cost, run.cumulative):
            fh.write(f"{t:.17g},{s:.17g},{c:.17g},{cum:.17g}\n")
