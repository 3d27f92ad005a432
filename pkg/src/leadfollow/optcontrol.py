"""Finite-dimensional leader control: exact discrete adjoint and projected gradient.

The cost is discretized on the explicit Euler grid z_{n+1} = z_n + dt f(z_n, u_n):

    J = dt * sum_n c_n L(X_n) + w * dt * sum_n |u_n|^2,

with trapezoid weights c_n and L(X) = (s/2) sum_i |X_i - X*_i|^2, where
s = 1 (``scaling="sum"``) or s = 1/N (``scaling="mean"``, the cost of the
empirical measure). The costate follows the Lagrangian sign <xi, z' - f>,
so in continuous time xi' = grad L - (df/dz)^T xi with xi(T) = 0, and the
control gradient is 2 w u - (df/du)^T xi. Discretely, xi_n is minus the
derivative of J with respect to z_{n+1}:

    xi_K = 0,   xi_n = -c_{n+1} dt grad L(z_{n+1}) + (I + dt df/dz(z_{n+1}, u_{n+1}))^T xi_{n+1},

    dJ/du_n = 2 w dt u_n - dt (df/du(z_n))^T xi_n,

which is the transpose of the forward linearization, so the gradient is the
exact derivative of the discrete cost at any dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .kernels import Kernels, eval_g, jacobian_g, jacobian_h
from .microdynamics import ControlSignal, SwarmState, Trajectory, integrate, project_ball


@dataclass(frozen=True, eq=False)
class CostSpec:
    target: np.ndarray
    control_weight: float = 1.0
    scaling: str = "sum"
    running_cost: str = "tracking_quadratic"

    def __post_init__(self):
        if not self.control_weight > 0:
            raise InputError("control_weight must be positive")
        if self.scaling not in ("sum", "mean"):
            raise InputError(f"scaling must be 'sum' or 'mean', got {self.scaling!r}")
        if self.running_cost != "tracking_quadratic":
            raise InputError(f"unsupported running cost {self.running_cost!r}")
        object.__setattr__(self, "target", np.atleast_1d(np.asarray(self.target, dtype=float)))

    def _target_for(self, X: np.ndarray) -> np.ndarray:
        t = self.target
        if t.ndim == 1 and t.shape[0] == X.shape[-1]:
            return t
        if t.shape == X.shape[-2:]:
            return t
        raise InputError(f"target of shape {t.shape} does not fit followers of shape {X.shape[-2:]}")

    def state_weight(self, n: int) -> float:
        return 1.0 if self.scaling == "sum" else 1.0 / n

    def running(self, X: np.ndarray) -> np.ndarray:
        """L(X) for one configuration (N, d) or a stack (K, N, d)."""
        diff = X - self._target_for(X)
        return 0.5 * self.state_weight(X.shape[-2]) * np.sum(diff * diff, axis=(-2, -1))

    def running_gradient(self, X: np.ndarray) -> np.ndarray:
        return self.state_weight(X.shape[-2]) * (X - self._target_for(X))


def _trapezoid_weights(n_nodes: int) -> np.ndarray:
    c = np.ones(n_nodes)
    c[0] = c[-1] = 0.5
    return c


def _steps(control: ControlSignal, dt: float) -> np.ndarray:
    return control.steps_per_piece(dt)


def cost_of_trajectory(traj: Trajectory, cost: CostSpec) -> float:
    dt = traj.dt
    state = dt * float(np.dot(_trapezoid_weights(len(traj)), cost.running(traj.followers)))
    steps = _steps(traj.control, dt)
    energy = cost.control_weight * dt * float(np.dot(steps, np.sum(traj.control.values ** 2, axis=(1, 2))))
    return state + energy


def evaluate_cost(initial: SwarmState, control: ControlSignal, cost: CostSpec, kernels: Kernels, dt: float) -> float:
    return cost_of_trajectory(integrate(initial, control, kernels, dt), cost)


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    times: np.ndarray
    xi_y: np.ndarray
    xi_x: np.ndarray


def _state_vjp(X, Y, u, kernels: Kernels, vX):
    """(df/dz)^T v for a costate v living on the followers only (leader rows of f are constant)."""
    N, d = X.shape
    m = Y.shape[0]
    outX = np.zeros_like(X)
    outY = np.zeros_like(Y)
    if not kernels.h.is_zero:
        JH = jacobian_h(kernels.h, X[:, None, :] - X[None, :, :])
        outX += np.einsum("pjab,pa->pb", JH, vX) / N
        outX -= np.einsum("ipab,ia->pb", JH, vX) / N
    if not kernels.g.is_zero and m:
        diff = X[:, None, :] - Y[None, :, :]
        for ell in range(1, d + 1):
            W = jacobian_g(kernels.g, ell, diff) * u[None, :, ell - 1, None, None]
            outX += np.einsum("ikab,ia->ib", W, vX) / m
            outY -= np.einsum("ikab,ia->kb", W, vX) / m
    return outY, outX


def control_vjp(X, Y, vY, vX, kernels: Kernels) -> np.ndarray:
    """(df/du)^T v, shape (m, d): v_Y,kl + (1/m) sum_i G^l(X_i - Y_k) . v_X,i."""
    out = np.array(vY, dtype=float, copy=True)
    m = Y.shape[0]
    if not kernels.g.is_zero and m:
        diff = X[:, None, :] - Y[None, :, :]
        for ell in range(1, X.shape[1] + 1):
            out[:, ell - 1] += np.einsum("ikd,id->k", eval_g(kernels.g, ell, diff), vX) / m
    return out


def solve_adjoint(traj: Trajectory, cost: CostSpec, kernels: Kernels) -> AdjointTrajectory:
    """Backward sweep for the costates (xi_Y, xi_X) on the trajectory grid."""
    if traj.method != "euler":
        raise InputError("the discrete adjoint is defined for euler trajectories only")
    dt = traj.dt
    u_steps = traj.control.step_values(dt)
    K = u_steps.shape[0]
    if len(traj) != K + 1:
        raise InputError(f"trajectory has {len(traj)} nodes but the control spans {K} steps of dt={dt}")
    c = _trapezoid_weights(K + 1)
    xi_y = np.zeros_like(traj.leaders)
    xi_x = np.zeros_like(traj.followers)
    for n in range(K - 1, -1, -1):
        X, Y = traj.followers[n + 1], traj.leaders[n + 1]
        nxt_y, nxt_x = xi_y[n + 1], xi_x[n + 1]
        if n + 1 < K:
            vy, vx = _state_vjp(X, Y, u_steps[n + 1], kernels, nxt_x)
            nxt_y = nxt_y + dt * vy
            nxt_x = nxt_x + dt * vx
        xi_y[n] = nxt_y
        xi_x[n] = nxt_x - c[n + 1] * dt * cost.running_gradient(X)
    return AdjointTrajectory(traj.times, xi_y, xi_x)


def control_gradient(traj: Trajectory, adjoint: AdjointTrajectory, cost: CostSpec, kernels: Kernels) -> np.ndarray:
    """dJ/du for every control piece, shape (P, m, d)."""
    dt = traj.dt
    control = traj.control
    u_steps = control.step_values(dt)
    K = u_steps.shape[0]
    per_step = np.empty_like(u_steps)
    for n in range(K):
        fu = control_vjp(traj.followers[n], traj.leaders[n], adjoint.xi_y[n], adjoint.xi_x[n], kernels)
        per_step[n] = 2.0 * cost.control_weight * dt * u_steps[n] - dt * fu
    starts = np.concatenate([[0], np.cumsum(_steps(control, dt))[:-1]])
    return np.add.reduceat(per_step, starts, axis=0)


def cost_and_gradient(initial: SwarmState, control: ControlSignal, cost: CostSpec, kernels: Kernels, dt: float):
    traj = integrate(initial, control, kernels, dt)
    adj = solve_adjoint(traj, cost, kernels)
    return cost_of_trajectory(traj, cost), control_gradient(traj, adj, cost, kernels), traj, adj


def l2_gradient(control: ControlSignal, grad: np.ndarray) -> np.ndarray:
    """Riesz representative in L^2(0, T): the discrete gradient divided by piece length."""
    return grad / control.durations[:, None, None]


def projected_residual(control: ControlSignal, grad_l2: np.ndarray, step: float) -> float:
    """max over pieces of |u - Proj(u - step * grad)| / step."""
    u = control.values
    moved = project_ball(u - step * grad_l2, control.u_max)
    return float(np.max(np.sqrt(np.sum((u - moved) ** 2, axis=(1, 2))))) / step


@dataclass
class OptimizeResult:
    control: ControlSignal
    cost: float
    iterations: int
    optimality_residual: float
    converged: bool
    history: list = field(default_factory=list)

    def summary(self) -> str:
        return "\n".join([f"cost={self.cost!r}", f"iterations={self.iterations}",
                          f"optimality_residual={self.optimality_residual!r}",
                          f"converged={str(self.converged).lower()}"]) + "\n"


def optimality_residual(control: ControlSignal, initial: SwarmState, cost: CostSpec, kernels: Kernels,
                        dt: float, step: float = 0.5) -> float:
    _, grad, _, _ = cost_and_gradient(initial, control, cost, kernels, dt)
    return projected_residual(control, l2_gradient(control, grad), step)


def optimize(initial: SwarmState, cost: CostSpec, kernels: Kernels, T: float, dt: float,
             n_pieces: int = 10, u_max: float = math.inf, step: float = 0.5, max_iter: int = 500,
             tol: float = 1e-6, u0: ControlSignal | None = None, max_halvings: int = 40) -> OptimizeResult:
    """Projected gradient descent on the per-leader ball of radius ``u_max``.

    Each iteration starts from ``step`` and halves it until the cost does not
    increase; iteration stops once the projected-gradient residual drops to
    ``tol``.
    """
    if not step > 0:
        raise InputError("step must be positive")
    if u0 is None:
        control = ControlSignal.zeros(initial.m, initial.d, T, u_max, n_pieces)
    else:
        control = ControlSignal.projected(u0.breakpoints, u0.values, u_max)
    if u_max == 0:
        J = evaluate_cost(initial, control, cost, kernels, dt)
        return OptimizeResult(control, J, 0, 0.0, True, [J])
    J, grad, _, _ = cost_and_gradient(initial, control, cost, kernels, dt)
    history = [J]
    converged = False
    res = math.inf
    it = 0
    for it in range(max_iter + 1):
        g = l2_gradient(control, grad)
        res = projected_residual(control, g, step)
        if res <= tol:
            converged = True
            break
        if it == max_iter:
            break
        s = step
        for _ in range(max_halvings):
            trial = control.with_values(project_ball(control.values - s * g, u_max))
            J_new, grad_new, _, _ = cost_and_gradient(initial, trial, cost, kernels, dt)
            if J_new <= J:
                break
            s *= 0.5
        else:
            break
        control, J, grad = trial, J_new, grad_new
        history.append(J)
    return OptimizeResult(control, J, it, res, converged, history)


def write_control_csv(path, control: ControlSignal) -> None:
    P, m, d = control.values.shape
    header = ["t_start", "t_end"] + [f"u_{k}_{a}" for k in range(1, m + 1) for a in range(1, d + 1)]
    data = np.column_stack([control.breakpoints[:-1], control.breakpoints[1:], control.values.reshape(P, m * d)])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def read_control_csv(path, u_max: float = math.inf) -> ControlSignal:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    cols = header[2:]
    d = max(int(c.rsplit("_", 1)[1]) for c in cols)
    m = len(cols) // d
    bp = np.concatenate([data[:, 0], data[-1:, 1]])
    return ControlSignal(bp, data[:, 2:].reshape(-1, m, d), u_max)
