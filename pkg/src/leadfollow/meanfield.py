"""Particle solution of the leader-driven mean-field transport equation.

The measure component is carried by N_mf equally weighted atoms that move
with the follower velocity field, so a mean-field run *is* a finite-agent
run; :func:`solve_meanfield` delegates to :func:`microdynamics.integrate`
and only reinterprets the followers as a measure.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import InputError
from .kernels import Kernels, certify_growth, zero
from .measures import WeightedMeasure, chi_distance, wasserstein1
from .microdynamics import ControlSignal, SwarmState, follower_velocity, growth_rate, integrate

Sampler = Callable[[int, int], np.ndarray]


def box_sampler(low, high, dim: int = 1, method: str = "halton") -> Sampler:
    """Sampler ``(seed, n) -> (n, dim)`` uniform on a box.

    Both methods are prefix-nested: the first n points of a draw of size
    n' > n equal the draw of size n for the same seed. ``halton`` is a
    scrambled low-discrepancy sequence, ``random`` plain i.i.d. draws.
    """
    low = np.broadcast_to(np.asarray(low, dtype=float), (dim,))
    high = np.broadcast_to(np.asarray(high, dtype=float), (dim,))
    if np.any(high <= low):
        raise InputError("box sampler needs high > low in every coordinate")
    if method not in ("halton", "random"):
        raise InputError(f"unknown sampling method {method!r}")

    def sample(seed: int, n: int) -> np.ndarray:
        if n < 1:
            raise InputError("cannot sample an empty cloud")
        if method == "halton":
            unit = qmc.Halton(d=dim, scramble=True, seed=seed).random(n)
        else:
            unit = np.random.default_rng(seed).random((n, dim))
        return low + (high - low) * unit

    return sample


@dataclass(frozen=True, eq=False)
class MeanFieldTrajectory:
    times: np.ndarray
    leaders: np.ndarray
    atoms: np.ndarray
    weights: np.ndarray
    kernels: Kernels
    control: ControlSignal | None = None
    dt: float = 0.0

    @property
    def n_particles(self) -> int:
        return self.atoms.shape[1]

    @property
    def radius(self) -> float:
        """R_T: a ball B(0, R_T) holds every support for all t."""
        return float(np.max(np.linalg.norm(self.atoms, axis=-1)))

    def measure(self, n: int) -> WeightedMeasure:
        return WeightedMeasure(self.atoms[n], self.weights, "probability")

    def index_of(self, t: float) -> int:
        idx = int(round((t - self.times[0]) / self.dt))
        if idx < 0 or idx >= self.times.size or not math.isclose(self.times[idx], t, rel_tol=1e-9, abs_tol=1e-12):
            raise InputError(f"time {t} is not on the trajectory grid")
        return idx


def _initial_atoms(mu0, n_particles, seed) -> np.ndarray:
    if isinstance(mu0, WeightedMeasure):
        if mu0.kind != "probability" or not mu0.is_uniform:
            raise InputError("the particle solver needs an equally weighted probability cloud")
        if n_particles is not None and n_particles != mu0.size:
            raise InputError(f"n_particles={n_particles} but the initial cloud has {mu0.size} atoms")
        return mu0.atoms
    if callable(mu0):
        if n_particles is None or n_particles < 1:
            raise InputError("sampling an initial cloud needs n_particles >= 1")
        atoms = np.asarray(mu0(seed, n_particles), dtype=float)
        if atoms.ndim != 2 or atoms.shape[0] != n_particles or not np.all(np.isfinite(atoms)):
            raise InputError("sampler returned an invalid cloud")
        return atoms
    atoms = np.asarray(mu0, dtype=float)
    if atoms.ndim != 2 or atoms.shape[0] < 1:
        raise InputError("initial cloud must be a measure, a sampler or an (n, d) array")
    return atoms


def solve_meanfield(mu0, Y0, control: ControlSignal, kernels: Kernels, dt: float,
                    n_particles: int | None = None, seed: int = 0, method: str = "euler",
                    T: float | None = None) -> MeanFieldTrajectory:
    """Transport ``mu0`` along the coupled leader / follower flow."""
    atoms = _initial_atoms(mu0, n_particles, seed)
    traj = integrate(SwarmState(np.asarray(Y0, dtype=float).reshape(-1, atoms.shape[1]), atoms),
                     control, kernels, dt, T=T, method=method)
    n = atoms.shape[0]
    return MeanFieldTrajectory(traj.times, traj.leaders, traj.followers, np.full(n, 1.0 / n),
                               kernels, control, dt)


@dataclass(frozen=True)
class Bump:
    """exp(1 / (s - 1)) with s = |x - c|^2 / r^2 inside B(c, r), zero outside."""

    center: tuple
    radius: float

    def _s(self, x):
        c = np.asarray(self.center, dtype=float)
        diff = np.asarray(x, dtype=float) - c
        return diff, np.sum(diff * diff, axis=-1) / self.radius**2

    def value(self, x) -> np.ndarray:
        _, s = self._s(x)
        inside = s < 1.0
        out = np.zeros_like(s)
        out[inside] = np.exp(1.0 / (s[inside] - 1.0))
        return out

    def gradient(self, x) -> np.ndarray:
        diff, s = self._s(x)
        inside = s < 1.0
        out = np.zeros_like(diff)
        si = s[inside]
        coef = np.exp(1.0 / (si - 1.0)) * (-1.0 / (si - 1.0) ** 2) * (2.0 / self.radius**2)
        out[inside] = coef[:, None] * diff[inside]
        return out


def weak_residual(traj: MeanFieldTrajectory, phi: Bump, t0: float, t1: float) -> float:
    """|<phi, mu(t1)> - <phi, mu(t0)> - int_{t0}^{t1} <grad phi . v, mu> dt| (trapezoid)."""
    n0, n1 = traj.index_of(t0), traj.index_of(t1)
    if n1 < n0:
        raise InputError("need t0 <= t1")
    u_steps = traj.control.step_values(traj.dt)
    w = traj.weights
    rhs = np.empty(n1 - n0 + 1)
    for j, n in enumerate(range(n0, n1 + 1)):
        X = traj.atoms[n]
        v = follower_velocity(X, traj.leaders[n], u_steps[min(n, u_steps.shape[0] - 1)], traj.kernels)
        rhs[j] = np.dot(w, np.sum(phi.gradient(X) * v, axis=-1))
    lhs = np.dot(w, phi.value(traj.atoms[n1])) - np.dot(w, phi.value(traj.atoms[n0]))
    integral = traj.dt * (rhs.sum() - 0.5 * (rhs[0] + rhs[-1])) if rhs.size > 1 else 0.0
    return float(abs(lhs - integral))


@dataclass(frozen=True, eq=False)
class MeanFieldProblem:
    """Everything a mean-field run needs except the initial cloud size."""

    atoms: np.ndarray
    leaders: np.ndarray
    control: ControlSignal
    kernels: Kernels
    dt: float

    def solve(self, atoms=None, leaders=None) -> MeanFieldTrajectory:
        atoms = self.atoms if atoms is None else atoms
        leaders = self.leaders if leaders is None else leaders
        return solve_meanfield(np.asarray(atoms), leaders, self.control, self.kernels, self.dt)


def certified_rate(kernels: Kernels, u_max: float, radius: float, n_samples: int = 4096, seed: int = 0) -> float:
    """Growth/Lipschitz rate C~ such that chi-perturbations grow at most like e^{C~ t}.

    The larger of the a-priori growth constant and 2 L_H + d L_G u_max, with
    L_H, L_G sampled Lipschitz constants on B(0, 2 radius) (pairwise
    differences of points in B(0, radius)).
    """
    ball = 2.0 * max(radius, 1e-12)
    lh = certify_growth(kernels.h, ball, n_samples, seed, role="h").lipschitz_estimate
    lg = certify_growth(kernels.g, ball, n_samples, seed, role="g").lipschitz_estimate
    return max(growth_rate(kernels, u_max), 2.0 * lh + kernels.dim * lg * u_max)


def smooth_displacement(atoms: np.ndarray, seed: int, n_modes: int = 4) -> np.ndarray:
    """A random smooth field v with |v| <= 1, evaluated at the atoms.

    Its gradient is small enough (for jitter scales below 0.1) that in one
    dimension x -> x + delta v(x) preserves the order of the atoms.
    """
    rng = np.random.default_rng(seed)
    d = atoms.shape[1]
    k = rng.standard_normal((n_modes, d))
    phase = rng.uniform(0.0, 2.0 * np.pi, (n_modes, d))
    amp = rng.uniform(-1.0, 1.0, (n_modes, d))
    amp /= np.sum(np.abs(amp), axis=0, keepdims=True) * math.sqrt(d)
    arg = atoms @ k.T
    return np.stack([np.sin(arg + phase[:, a]) @ amp[:, a] for a in range(d)], axis=1)


@dataclass(frozen=True)
class StabilityReport:
    ratio: float
    chi0: float
    chi_max: float
    rate: float
    bound: float
    chi_series: tuple


def stability_experiment(problem: MeanFieldProblem, delta_y: float, delta_mu: float, seed: int = 0,
                         jitter: str = "smooth", w1_stride: int = 1) -> StabilityReport:
    """Run the base and a perturbed initial datum under the same control.

    Leaders are shifted by ``delta_y`` along e_1; atoms are displaced by
    ``delta_mu`` times a smooth random field (``jitter="smooth"``) or by
    i.i.d. uniform kicks (``jitter="iid"``).
    """
    atoms = np.asarray(problem.atoms, dtype=float)
    leaders = np.asarray(problem.leaders, dtype=float).reshape(-1, atoms.shape[1])
    shift = np.zeros(atoms.shape[1])
    shift[0] = delta_y
    if jitter == "smooth":
        kick = smooth_displacement(atoms, seed)
    elif jitter == "iid":
        kick = np.random.default_rng(seed).uniform(-1.0, 1.0, atoms.shape) / math.sqrt(atoms.shape[1])
    else:
        raise InputError(f"unknown jitter {jitter!r}")
    base = problem.solve(atoms, leaders)
    pert = problem.solve(atoms + delta_mu * kick, leaders + shift)
    idx = range(0, base.times.size, w1_stride)
    chi = [chi_distance((base.leaders[n], base.measure(n)), (pert.leaders[n], pert.measure(n))) for n in idx]
    chi0 = chi[0]
    if chi0 == 0.0:
        raise InputError("zero initial perturbation: the stability ratio is undefined")
    radius = max(base.radius, pert.radius)
    rate = certified_rate(problem.kernels, problem.control.u_max if math.isfinite(problem.control.u_max)
                          else float(np.max(np.linalg.norm(problem.control.values, axis=-1))), radius)
    T = base.times[-1] - base.times[0]
    return StabilityReport(max(chi) / chi0, chi0, max(chi), rate, math.exp(rate * T), tuple(chi))


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    max_w1: float
    max_leader_err: float
    runtime_s: float


def convergence_study(sampler: Sampler, Y0, controls, kernels: Kernels, dt: float, n_list,
                      reference_n: int, seed: int = 0, workers: int = 1, w1_stride: int = 1) -> list[ConvergenceRow]:
    """Compare N-particle runs against a reference run on nested initial clouds.

    ``controls`` is a single ControlSignal (u_N = u*) or a callable N -> ControlSignal.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InputError("n_list must be strictly increasing")
    if reference_n <= max(n_list):
        raise InputError("reference_n must exceed every N in n_list")
    control_for = controls if callable(controls) else (lambda n: controls)
    ref_atoms = sampler(seed, reference_n)
    ref = solve_meanfield(ref_atoms, Y0, control_for(reference_n), kernels, dt)
    idx = range(0, ref.times.size, w1_stride)
    ref_measures = [ref.measure(n) for n in idx]

    def run(n):
        t0 = time.perf_counter()
        traj = solve_meanfield(ref_atoms[:n], Y0, control_for(n), kernels, dt)
        w1 = max(wasserstein1(traj.measure(j), ref_m) for j, ref_m in zip(idx, ref_measures))
        lead = float(np.max(np.linalg.norm(traj.leaders - ref.leaders, axis=-1))) if traj.leaders.size else 0.0
        return ConvergenceRow(n, w1, lead, time.perf_counter() - t0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, n_list))
    else:
        rows = [run(n) for n in n_list]
    return sorted(rows, key=lambda r: r.n)


def leader_field_gap(kernels: Kernels, Y1, Y2, u, points) -> float:
    """sup over ``points`` of |sum_l G^l * mu_{m,l}(x) - G^l * mu'_{m,l}(x)| for equal controls."""
    points = np.asarray(points, dtype=float)
    u = np.asarray(u, dtype=float)
    g_only = Kernels(zero(kernels.dim), kernels.g)
    v1 = follower_velocity(points, np.asarray(Y1, dtype=float), u, g_only)
    v2 = follower_velocity(points, np.asarray(Y2, dtype=float), u, g_only)
    return float(np.max(np.linalg.norm(v1 - v2, axis=-1)))


def write_convergence_csv(path, rows: list[ConvergenceRow], timing: bool = True) -> None:
    with open(path, "w") as fh:
        fh.write("N,max_W1,max_leader_err,runtime_s\n")
        for r in rows:
            fh.write(f"{r.n},{r.max_w1:.17g},{r.max_leader_err:.17g},{r.runtime_s if timing else 0.0:.6g}\n")
