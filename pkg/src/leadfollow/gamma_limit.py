"""Finite-N optimal controls and their behavior as the follower cloud grows.

Every problem in a sweep shares one initial cloud: the N-agent problem uses
the first N atoms of the reference cloud, the same nesting used by the
mean-field convergence study. The state cost is the measure form
(1/2) int |x - x*|^2 dmu, i.e. ``CostSpec(scaling="mean")``.

The mean-field costate is represented on the particles by phi(t, X_i) =
N xi_{X_i}(t). With that scaling the measure-form control condition and the
finite one are the same expression, and for N a power of two they agree
bitwise because multiplying and dividing by N is exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError
from .kernels import Kernels, eval_g
from .meanfield import Sampler, _initial_atoms
from .microdynamics import ControlSignal, SwarmState, integrate
from .optcontrol import (CostSpec, OptimizeResult, cost_of_trajectory, l2_gradient, optimize,
                         projected_residual, solve_adjoint)


def _measure_cost(cost: CostSpec) -> CostSpec:
    if cost.target.ndim != 1:
        raise InputError("the measure-form cost needs a single target point x*")
    return cost if cost.scaling == "mean" else replace(cost, scaling="mean")


def limit_cost(control: ControlSignal, mu0, Y0, kernels: Kernels, cost: CostSpec, n_ref: int | None,
               dt: float, seed: int = 0, T: float | None = None) -> float:
    """J(u) on a large particle cloud: trapezoid quadrature of the state cost plus the control energy."""
    atoms = _initial_atoms(mu0, n_ref, seed)
    Y0 = np.asarray(Y0, dtype=float).reshape(-1, atoms.shape[1])
    traj = integrate(SwarmState(Y0, atoms), control, kernels, dt, T=T)
    return cost_of_trajectory(traj, _measure_cost(cost))


@dataclass(frozen=True, eq=False)
class TrackingProblem:
    """A leader-steering problem posed on a nested family of follower clouds."""

    sampler: Sampler
    leaders: np.ndarray
    kernels: Kernels
    cost: CostSpec
    T: float = 1.0
    dt: float = 0.01
    n_pieces: int = 10
    u_max: float = math.inf
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 2000
    step: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "cost", _measure_cost(self.cost))
        object.__setattr__(self, "leaders", np.atleast_2d(np.asarray(self.leaders, dtype=float)))

    def cloud(self, n: int) -> np.ndarray:
        return np.asarray(self.sampler(self.seed, n), dtype=float)

    def initial(self, atoms: np.ndarray) -> SwarmState:
        return SwarmState(self.leaders, atoms)

    def solve(self, atoms: np.ndarray, u0: ControlSignal | None = None) -> OptimizeResult:
        return optimize(self.initial(atoms), self.cost, self.kernels, self.T, self.dt,
                        n_pieces=self.n_pieces, u_max=self.u_max, step=self.step,
                        max_iter=self.max_iter, tol=self.tol, u0=u0)

    def cost_at(self, atoms: np.ndarray, control: ControlSignal) -> float:
        return cost_of_trajectory(integrate(self.initial(atoms), control, self.kernels, self.dt), self.cost)


@dataclass(frozen=True)
class GammaRow:
    n: int
    optimal_cost: float
    control_gap: float
    limit_cost_estimate: float
    converged: bool
    residual: float


@dataclass
class GammaSweepReport:
    rows: list
    reference_n: int
    reference_cost: float
    reference_control: ControlSignal
    reference_converged: bool
    controls: dict = field(default_factory=dict)

    def cost_gaps(self) -> np.ndarray:
        return np.array([abs(r.optimal_cost - self.reference_cost) for r in self.rows])

    def to_csv(self, path) -> None:
        write_gamma_csv(path, self)


def gamma_sweep(problem: TrackingProblem, n_list, n_ref: int, workers: int = 1) -> GammaSweepReport:
    """Optimize at every N in ``n_list`` and at ``n_ref`` on nested clouds and compare."""
    n_list = sorted(int(n) for n in n_list)
    if n_ref <= n_list[-1]:
        raise InputError("n_ref must exceed every N in n_list")
    ref_atoms = problem.cloud(n_ref)
    ref = problem.solve(ref_atoms)

    def run(n):
        res = problem.solve(ref_atoms[:n])
        row = GammaRow(n, res.cost, res.control.l2_distance(ref.control),
                       problem.cost_at(ref_atoms, res.control), res.converged, res.optimality_residual)
        return row, res.control

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(run, n_list))
    else:
        out = [run(n) for n in n_list]
    return GammaSweepReport([r for r, _ in out], n_ref, ref.cost, ref.control, ref.converged,
                            {r.n: c for r, c in out})


def _particle_gradient(traj, phi, cost: CostSpec, kernels: Kernels, xi_y) -> np.ndarray:
    """dJ/du per piece from the measure-form condition 2 w u - [xi_Y + (1/m) int G(x - Y) . phi dmu]."""
    dt = traj.dt
    control = traj.control
    u_steps = control.step_values(dt)
    m = traj.leaders.shape[1]
    per_step = np.empty_like(u_steps)
    for n in range(u_steps.shape[0]):
        X, Y = traj.followers[n], traj.leaders[n]
        field_ = np.array(xi_y[n], dtype=float, copy=True)
        if not kernels.g.is_zero and m:
            diff = X[:, None, :] - Y[None, :, :]
            for ell in range(1, X.shape[1] + 1):
                pairing = np.einsum("ikd,id->ik", eval_g(kernels.g, ell, diff), phi[n])
                field_[:, ell - 1] += pairing.sum(axis=0) / X.shape[0] / m
        per_step[n] = 2.0 * cost.control_weight * dt * u_steps[n] - dt * field_
    starts = np.concatenate([[0], np.cumsum(control.steps_per_piece(dt))[:-1]])
    return np.add.reduceat(per_step, starts, axis=0)


def infinite_optimality_residual(control: ControlSignal, atoms, Y0, kernels: Kernels, cost: CostSpec,
                                 dt: float, step: float = 0.5) -> float:
    """Projected-gradient residual of the measure-form optimality condition on a particle cloud."""
    atoms = np.asarray(atoms, dtype=float)
    cost = _measure_cost(cost)
    traj = integrate(SwarmState(np.asarray(Y0, dtype=float).reshape(-1, atoms.shape[1]), atoms),
                     control, kernels, dt)
    adj = solve_adjoint(traj, cost, kernels)
    phi = atoms.shape[0] * adj.xi_x
    grad = _particle_gradient(traj, phi, cost, kernels, adj.xi_y)
    return projected_residual(control, l2_gradient(control, grad), step)


def write_gamma_csv(path, report: GammaSweepReport) -> None:
    with open(path, "w") as fh:
        fh.write("N,J_opt,ctrl_gap,J_limit_est,converged\n")
        for r in report.rows:
            fh.write(f"{r.n},{r.optimal_cost:.17g},{r.control_gap:.17g},{r.limit_cost_estimate:.17g},"
                     f"{str(r.converged).lower()}\n")
