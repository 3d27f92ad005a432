"""The finite (N + m)-agent affine control system.

Leaders move with their control, ``dY_k/dt = u_k``; followers feel the
empirical convolutions

    dX_i/dt = (1/N) sum_j H(X_i - X_j) + sum_l (1/m) sum_k G^l(X_i - Y_k) u_kl.

The j = i term is kept (every catalog H vanishes at the origin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .kernels import Kernels, eval_g, eval_h

_ALIGN_TOL = 1e-9


def project_ball(u, u_max: float) -> np.ndarray:
    """Clamp every leader velocity (last axis) into the ball of radius ``u_max``.

    Vectors already within a relative 1e-12 of the ball are left untouched,
    which makes the projection exactly idempotent in floating point.
    """
    u = np.array(u, dtype=float)
    if u_max == 0:
        return np.zeros_like(u)
    if not np.isfinite(u_max):
        return u
    norms = np.linalg.norm(u, axis=-1, keepdims=True)
    outside = norms > u_max * (1.0 + 1e-12)
    scale = np.where(outside, u_max / np.where(outside, norms, 1.0), 1.0)
    return u * scale


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise-constant leader velocities on ``breakpoints``.

    ``values[p]`` is the (m, d) control on ``[breakpoints[p], breakpoints[p+1])``.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    u_max: float = math.inf

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise InputError("need at least two breakpoints")
        if bp[0] != 0.0:
            raise InputError(f"first breakpoint must be 0, got {bp[0]}")
        if np.any(np.diff(bp) <= 0):
            raise InputError("breakpoints must be strictly increasing")
        if vals.ndim != 3 or vals.shape[0] != bp.size - 1:
            raise InputError(f"values must have shape ({bp.size - 1}, m, d), got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InputError("control values must be finite")
        if self.u_max < 0:
            raise InputError("u_max must be nonnegative")
        if np.any(np.linalg.norm(vals, axis=-1) > self.u_max * (1.0 + 1e-12)):
            raise InputError(f"control leaves the admissible ball of radius {self.u_max}; project it first")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value, T: float, u_max: float = math.inf, n_pieces: int = 1) -> "ControlSignal":
        value = np.atleast_2d(np.asarray(value, dtype=float))
        bp = np.linspace(0.0, T, n_pieces + 1)
        return cls(bp, np.repeat(value[None], n_pieces, axis=0), u_max)

    @classmethod
    def zeros(cls, m: int, d: int, T: float, u_max: float = math.inf, n_pieces: int = 1) -> "ControlSignal":
        return cls.constant(np.zeros((m, d)), T, u_max, n_pieces)

    @classmethod
    def projected(cls, breakpoints, values, u_max: float) -> "ControlSignal":
        return cls(breakpoints, project_ball(values, u_max), u_max)

    def with_values(self, values) -> "ControlSignal":
        return ControlSignal(self.breakpoints, values, self.u_max)

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def n_pieces(self) -> int:
        return self.values.shape[0]

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def steps_per_piece(self, dt: float) -> np.ndarray:
        """Number of dt-steps in every piece; raises if a breakpoint is off-grid."""
        if not dt > 0:
            raise InputError(f"dt must be positive, got {dt}")
        ratios = self.breakpoints / dt
        nearest = np.rint(ratios)
        bad = np.abs(ratios - nearest) > _ALIGN_TOL * np.maximum(1.0, ratios)
        if np.any(bad):
            idx = int(np.argmax(bad))
            raise InputError(f"breakpoint {float(self.breakpoints[idx])!r} (index {idx}) is not a multiple of dt={dt!r}")
        return np.diff(nearest).astype(int)

    def step_values(self, dt: float) -> np.ndarray:
        """Per-step control, shape (K, m, d); left-continuous within each piece."""
        return np.repeat(self.values, self.steps_per_piece(dt), axis=0)

    def l2_distance(self, other: "ControlSignal") -> float:
        if not np.array_equal(self.breakpoints, other.breakpoints):
            raise InputError("controls live on different breakpoint grids")
        sq = np.sum((self.values - other.values) ** 2, axis=(1, 2))
        return float(np.sqrt(np.sum(sq * self.durations)))


@dataclass(frozen=True, eq=False)
class SwarmState:
    leaders: np.ndarray
    followers: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        Y = np.asarray(self.leaders, dtype=float)
        X = np.asarray(self.followers, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InputError(f"followers must have shape (N, d) with N >= 1, got {X.shape}")
        if Y.size == 0:
            Y = np.zeros((0, X.shape[1]))
        if Y.ndim != 2 or Y.shape[1] != X.shape[1]:
            raise InputError(f"leaders must have shape (m, {X.shape[1]}), got {Y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("agent coordinates must be finite")
        object.__setattr__(self, "leaders", Y)
        object.__setattr__(self, "followers", X)

    @property
    def m(self) -> int:
        return self.leaders.shape[0]

    @property
    def n(self) -> int:
        return self.followers.shape[0]

    @property
    def d(self) -> int:
        return self.followers.shape[1]


def follower_velocity(X: np.ndarray, Y: np.ndarray, u: np.ndarray, kernels: Kernels) -> np.ndarray:
    """H * mu_N(X_i) + sum_l G^l * mu_{m,l}(X_i) for all followers."""
    m = Y.shape[0]
    if not kernels.h.is_zero:
        out = eval_h(kernels.h, X[:, None, :] - X[None, :, :]).mean(axis=1)
    else:
        out = np.zeros_like(X)
    if not kernels.g.is_zero:
        if m == 0:
            raise ConfigError("nonzero G kernels need at least one leader")
        diff = X[:, None, :] - Y[None, :, :]
        for ell in range(1, X.shape[1] + 1):
            out = out + (eval_g(kernels.g, ell, diff) * u[None, :, ell - 1, None]).sum(axis=1) / m
    return out


def drift(state: SwarmState, u_now, kernels: Kernels) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side (dY, dX) at ``state`` under the control value ``u_now``."""
    u = np.asarray(u_now, dtype=float).reshape(state.m, state.d)
    if kernels.dim != state.d:
        raise InputError(f"kernels act in R^{kernels.dim}, state lives in R^{state.d}")
    return u.copy(), follower_velocity(state.followers, state.leaders, u, kernels)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    leaders: np.ndarray
    followers: np.ndarray
    control: ControlSignal
    dt: float
    method: str = "euler"

    def __len__(self):
        return self.times.size

    def state(self, n: int) -> SwarmState:
        return SwarmState(self.leaders[n], self.followers[n], float(self.times[n]))

    @property
    def final(self) -> SwarmState:
        return self.state(-1)

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.times, self.leaders, self.followers)


def _euler_step(Y, X, u, kernels, dt):
    return Y + dt * u, X + dt * follower_velocity(X, Y, u, kernels)


def _rk4_step(Y, X, u, kernels, dt):
    k1 = follower_velocity(X, Y, u, kernels)
    k2 = follower_velocity(X + 0.5 * dt * k1, Y + 0.5 * dt * u, u, kernels)
    k3 = follower_velocity(X + 0.5 * dt * k2, Y + 0.5 * dt * u, u, kernels)
    k4 = follower_velocity(X + dt * k3, Y + dt * u, u, kernels)
    return Y + dt * u, X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_STEPPERS = {"euler": _euler_step, "rk4": _rk4_step}


def integrate(initial: SwarmState, control: ControlSignal, kernels: Kernels, dt: float,
              T: float | None = None, method: str = "euler") -> Trajectory:
    """Integrate on the uniform grid of step ``dt`` up to ``T`` (default: the control horizon)."""
    if method not in _STEPPERS:
        raise InputError(f"unknown method {method!r}")
    if T is not None and not math.isclose(T, control.T, rel_tol=1e-12, abs_tol=1e-15):
        raise InputError(f"horizon T={T} differs from the control horizon {control.T}")
    if control.m != initial.m or control.d != initial.d:
        raise InputError(f"control is ({control.m}, {control.d}) but the swarm has m={initial.m}, d={initial.d}")
    if kernels.dim != initial.d:
        raise InputError(f"kernels act in R^{kernels.dim}, state lives in R^{initial.d}")
    if not kernels.g.is_zero and initial.m == 0:
        raise ConfigError("nonzero G kernels need at least one leader")
    u_steps = control.step_values(dt)
    K = u_steps.shape[0]
    step = _STEPPERS[method]
    Ys = np.empty((K + 1,) + initial.leaders.shape)
    Xs = np.empty((K + 1,) + initial.followers.shape)
    Ys[0], Xs[0] = initial.leaders, initial.followers
    for n in range(K):
        Ys[n + 1], Xs[n + 1] = step(Ys[n], Xs[n], u_steps[n], kernels, dt)
    times = initial.time + dt * np.arange(K + 1)
    return Trajectory(times, Ys, Xs, control, dt, method)


def _norm_parts(Y, X):
    return np.linalg.norm(Y, axis=-1).mean(axis=-1) + np.linalg.norm(X, axis=-1).mean(axis=-1)


def state_norm(state: SwarmState) -> float:
    """(1/m) sum |Y_k| + (1/N) sum |X_i|."""
    if state.m == 0:
        raise InputError("the swarm norm needs at least one leader")
    return float(_norm_parts(state.leaders, state.followers))


def growth_rate(kernels: Kernels, u_max: float) -> float:
    """A constant C with d||zeta||/dt <= C (1 + ||zeta||) for admissible controls.

    Leaders contribute at most u_max; followers at most
    C_H (1 + 2||X||) + d C_G u_max (1 + ||X|| + ||Y||).
    """
    ch = kernels.h.growth_constant
    cg = kernels.g.growth_constant
    d = kernels.dim
    return max(u_max + ch + d * cg * u_max, 2.0 * ch + d * cg * u_max)


@dataclass(frozen=True)
class AprioriReport:
    growth_ok: bool
    lipschitz_constant: float
    max_norm: float
    bound: float


def check_apriori_bounds(traj: Trajectory, C_tilde: float) -> AprioriReport:
    """Growth bound (||zeta0|| + C T) e^{C T} and the time-Lipschitz constant."""
    if not C_tilde > 0:
        raise InputError("C_tilde must be positive")
    if traj.leaders.shape[1] == 0:
        raise InputError("the swarm norm needs at least one leader")
    norms = _norm_parts(traj.leaders, traj.followers)
    T = traj.times[-1] - traj.times[0]
    bound = (norms[0] + C_tilde * T) * math.exp(C_tilde * T)
    # the largest quotient over all grid pairs is attained by a consecutive pair (triangle inequality)
    if len(traj) > 1:
        gaps = _norm_parts(np.diff(traj.leaders, axis=0), np.diff(traj.followers, axis=0))
        lip = float(np.max(gaps / np.diff(traj.times)))
    else:
        lip = 0.0
    max_norm = float(norms.max())
    return AprioriReport(max_norm <= bound, lip, max_norm, float(bound))


def write_trajectory_csv(path, times, leaders, followers) -> None:
    K1, m, d = leaders.shape
    N = followers.shape[1]
    header = ["t"]
    header += [f"Y_{k}_{a}" for k in range(1, m + 1) for a in range(1, d + 1)]
    header += [f"X_{i}_{a}" for i in range(1, N + 1) for a in range(1, d + 1)]
    data = np.column_stack([times, leaders.reshape(K1, m * d), followers.reshape(K1, N * d)])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_trajectory_csv`; returns (times, leaders, followers)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    y_cols = [c for c in header if c.startswith("Y_")]
    x_cols = [c for c in header if c.startswith("X_")]
    d = max(int(c.rsplit("_", 1)[1]) for c in x_cols)
    m = len(y_cols) // d
    N = len(x_cols) // d
    times = data[:, 0]
    leaders = data[:, 1:1 + m * d].reshape(-1, m, d)
    followers = data[:, 1 + m * d:].reshape(-1, N, d)
    return times, leaders, followers
