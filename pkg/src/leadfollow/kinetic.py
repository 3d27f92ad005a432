"""Boltzmann-type binary interactions with randomly controlled agents.

In one interaction an agent at x meets a partner at y. Each carries an
independent Bernoulli(p) bit saying whether it is controlled. Then

    x' = x + alpha [ H(x - y)(1 - t)(1 - t*) + sum_l G^l(x - y) u*_l (1 - t) t* + u t ],

with t the agent's own bit and t* the partner's. Averaging over the bits
gives x + alpha <K>(x, y), the interaction kernel of the limit equation.

Monte Carlo uses Nanbu-Babovsky pairing: each step draws a random
permutation and pairs up its first 2 n_pairs entries, with n_pairs =
M eta dt / 2 (stochastically rounded). Both partners are updated from their
pre-step positions. Every step draws from its own stream, seeded by
(seed, step index), so a run is reproducible regardless of how work is
scheduled.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .kernels import Kernels, eval_g, eval_h
from .measures import WeightedMeasure, wasserstein1
from .meanfield import MeanFieldTrajectory, Sampler, _initial_atoms
from .microdynamics import ControlSignal


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(step)]))


@dataclass(frozen=True, eq=False)
class KineticEnsemble:
    samples: np.ndarray
    p: float
    seed: int = 0
    step: int = 0
    time: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 2:
            raise InputError(f"an ensemble needs at least two samples, got shape {s.shape}")
        if not 0.0 <= self.p <= 1.0:
            raise InputError(f"p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "samples", s)

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def measure(self) -> WeightedMeasure:
        return WeightedMeasure(self.samples, np.full(self.size, 1.0 / self.size))

    def advanced(self, samples: np.ndarray, dt: float) -> "KineticEnsemble":
        return KineticEnsemble(samples, self.p, self.seed, self.step + 1, self.time + dt)


@dataclass(frozen=True, eq=False)
class KineticControls:
    """Piecewise-constant controls for controlled agents (u) and for interactions (u*)."""

    u: ControlSignal
    u_star: ControlSignal

    def __post_init__(self):
        for sig in (self.u, self.u_star):
            if sig.m != 1:
                raise InputError("kinetic controls are single vectors in R^d")
        if self.u.d != self.u_star.d:
            raise InputError("u and u* live in different dimensions")

    @classmethod
    def constant(cls, u, u_star, T: float, u_max: float = math.inf) -> "KineticControls":
        u = np.asarray(u, dtype=float).reshape(1, -1)
        u_star = np.asarray(u_star, dtype=float).reshape(1, -1)
        return cls(ControlSignal.constant(u, T, u_max), ControlSignal.constant(u_star, T, u_max))

    @staticmethod
    def _value(sig: ControlSignal, t: float) -> np.ndarray:
        idx = int(np.searchsorted(sig.breakpoints, t * (1.0 + 1e-12) + 1e-15, side="right")) - 1
        return sig.values[min(max(idx, 0), sig.n_pieces - 1), 0]

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return self._value(self.u, t), self._value(self.u_star, t)


def _g_contraction(kernels: Kernels, xi: np.ndarray, u_star) -> np.ndarray:
    """sum_l G^l(xi) u*_l for a batch xi."""
    u_star = np.asarray(u_star, dtype=float)
    out = np.zeros(np.broadcast_shapes(xi.shape, u_star.shape))
    if kernels.g.is_zero:
        return out
    for ell in range(1, xi.shape[-1] + 1):
        out = out + eval_g(kernels.g, ell, xi) * u_star[..., ell - 1:ell]
    return out


def binary_interaction(x, y, theta, theta_star, u_alpha, u_star_alpha, alpha: float, kernels: Kernels) -> np.ndarray:
    """Post-interaction position of the agent at ``x`` meeting ``y``; batched over leading axes."""
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(theta, dtype=float)[..., None]
    ts = np.asarray(theta_star, dtype=float)[..., None]
    xi = x - y
    jump = (eval_h(kernels.h, xi) * ((1.0 - t) * (1.0 - ts))
            + _g_contraction(kernels, xi, u_star_alpha) * ((1.0 - t) * ts)
            + np.asarray(u_alpha, dtype=float) * t)
    return x + alpha * jump


def limit_kernel(x, y, u_bar, u_star_bar, p: float, kernels: Kernels) -> np.ndarray:
    """<K> = (1 - p)^2 H(x - y) + p (1 - p) sum_l G^l(x - y) u*_l + p u."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"p must lie in [0, 1], got {p}")
    xi = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    q = 1.0 - p
    return (q * q) * eval_h(kernels.h, xi) + (p * q) * _g_contraction(kernels, xi, u_star_bar) \
        + p * np.asarray(u_bar, dtype=float)


def draw_pairs(rng: np.random.Generator, M: int, rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint random pairs, about M * rate / 2 of them (stochastic rounding)."""
    expected = M * rate / 2.0
    n_pairs = int(math.floor(expected))
    if rng.random() < expected - n_pairs:
        n_pairs += 1
    n_pairs = min(n_pairs, M // 2)
    perm = rng.permutation(M)
    return perm[:n_pairs], perm[n_pairs:2 * n_pairs]


def boltzmann_step(ens: KineticEnsemble, eta: float, alpha: float, dt: float, controls: KineticControls,
                   kernels: Kernels) -> KineticEnsemble:
    """One Nanbu-Babovsky step of the controlled binary-interaction process."""
    if eta * dt > 1.0 + 1e-12:
        raise ConfigError(f"eta * dt = {eta * dt} exceeds 1")
    if eta < 0 or dt <= 0:
        raise ConfigError("need eta >= 0 and dt > 0")
    rng = step_rng(ens.seed, ens.step)
    first, second = draw_pairs(rng, ens.size, eta * dt)
    bits = (rng.random(ens.size) < ens.p).astype(float)
    u, u_star = controls.at(ens.time)
    X = ens.samples
    out = X.copy()
    if first.size:
        x, y = X[first], X[second]
        tx, ty = bits[first], bits[second]
        out[first] = binary_interaction(x, y, tx, ty, u, u_star, alpha, kernels)
        out[second] = binary_interaction(y, x, ty, tx, u, u_star, alpha, kernels)
    return ens.advanced(out, dt)


def run_boltzmann(ens: KineticEnsemble, eps: float, T: float, controls: KineticControls, kernels: Kernels,
                  record_every: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-invariant scaling alpha = eps, eta = 1/eps, dt = eps up to time T."""
    n_steps = int(round(T / eps))
    if not math.isclose(n_steps * eps, T, rel_tol=1e-9):
        raise InputError(f"eps={eps} does not divide T={T}")
    times = [ens.time]
    snaps = [ens.samples]
    for k in range(n_steps):
        ens = boltzmann_step(ens, 1.0 / eps, eps, eps, controls, kernels)
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            times.append(ens.time)
            snaps.append(ens.samples)
    return np.array(times), np.stack(snaps)


def limit_velocity(X: np.ndarray, p: float, u_bar, u_star_bar, kernels: Kernels) -> np.ndarray:
    """int <K>(x, y) dmu(y) at every atom x of the equally weighted cloud X."""
    q = 1.0 - p
    if not kernels.h.is_zero:
        vh = eval_h(kernels.h, X[:, None, :] - X[None, :, :]).mean(axis=1)
    else:
        vh = np.zeros_like(X)
    vg = np.zeros_like(X)
    if not kernels.g.is_zero and p * q != 0.0:
        vg = _g_contraction(kernels, X[:, None, :] - X[None, :, :], u_star_bar).mean(axis=1)
    return (q * q) * vh + (p * q) * vg + p * np.asarray(u_bar, dtype=float)


def solve_limit_pde(mu0, p: float, controls: KineticControls, kernels: Kernels, T: float, dt: float,
                    n_mf: int | None = None, seed: int = 0) -> MeanFieldTrajectory:
    """Particle method for the limit transport equation driven by <K>."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"p must lie in [0, 1], got {p}")
    X = np.array(_initial_atoms(mu0, n_mf, seed), dtype=float)
    n_steps = int(round(T / dt))
    if not math.isclose(n_steps * dt, T, rel_tol=1e-9):
        raise InputError(f"dt={dt} does not divide T={T}")
    Xs = np.empty((n_steps + 1,) + X.shape)
    Xs[0] = X
    for n in range(n_steps):
        u, u_star = controls.at(n * dt)
        Xs[n + 1] = Xs[n] + dt * limit_velocity(Xs[n], p, u, u_star, kernels)
    n = X.shape[0]
    return MeanFieldTrajectory(dt * np.arange(n_steps + 1), np.zeros((n_steps + 1, 0, X.shape[1])), Xs,
                               np.full(n, 1.0 / n), kernels, None, dt)


@dataclass(frozen=True)
class KineticRow:
    eps: float
    seed: int
    max_w1: float
    runtime_s: float


@dataclass
class QuasiInvariantTable:
    rows: list

    def medians(self) -> dict:
        out = {}
        for eps in sorted({r.eps for r in self.rows}, reverse=True):
            out[eps] = float(np.median([r.max_w1 for r in self.rows if r.eps == eps]))
        return out

    def to_csv(self, path, timing: bool = True) -> None:
        write_kinetic_csv(path, self.rows, timing)


def quasi_invariant_sweep(eps_list, M: int, p: float, controls: KineticControls, kernels: Kernels, T: float,
                          sampler: Sampler, seeds=(0,), limit_dt: float | None = None,
                          workers: int = 1) -> QuasiInvariantTable:
    """max_t W1 between the Boltzmann ensemble and the limit particle solution, per eps and seed.

    Both start from the same M atoms; the comparison is made at the
    Boltzmann times, which must lie on the limit grid.
    """
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if limit_dt is None:
        limit_dt = min(eps_list) / 2.0
    for e in eps_list:
        r = e / limit_dt
        if abs(r - round(r)) > 1e-9:
            raise InputError(f"eps={e} is not a multiple of the limit step {limit_dt}")

    def job(seed):
        atoms = np.asarray(sampler(seed, M), dtype=float)
        t0 = time.perf_counter()
        ref = solve_limit_pde(atoms, p, controls, kernels, T, limit_dt)
        t_ref = time.perf_counter() - t0
        rows = []
        for e in eps_list:
            t1 = time.perf_counter()
            times, snaps = run_boltzmann(KineticEnsemble(atoms, p, seed), e, T, controls, kernels)
            w1 = 0.0
            for t, snap in zip(times, snaps):
                lim = ref.measure(ref.index_of(t))
                w1 = max(w1, wasserstein1(WeightedMeasure(snap, lim.weights), lim))
            rows.append(KineticRow(e, int(seed), w1, time.perf_counter() - t1 + t_ref))
        return rows

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(job, seeds))
    else:
        out = [job(s) for s in seeds]
    rows = [r for chunk in out for r in chunk]
    rows.sort(key=lambda r: (-r.eps, r.seed))
    return QuasiInvariantTable(rows)


def write_kinetic_csv(path, rows, timing: bool = True) -> None:
    with open(path, "w") as fh:
        fh.write("eps,seed,max_W1,runtime_s\n")
        for r in rows:
            fh.write(f"{r.eps:.17g},{r.seed},{r.max_w1:.17g},{r.runtime_s if timing else 0.0:.6g}\n")
