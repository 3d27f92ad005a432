import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from leadfollow.errors import ConfigError
from leadfollow.kernels import KernelSpec, Kernels, eval_h, zero
from leadfollow.meanfield import box_sampler, solve_meanfield
from leadfollow.kinetic import (KineticControls, KineticEnsemble, binary_interaction, boltzmann_step, draw_pairs,
                                limit_kernel, quasi_invariant_sweep, run_boltzmann, solve_limit_pde, step_rng)
from leadfollow.microdynamics import ControlSignal

LINEAR = KernelSpec("linear", (), 1)
UNIT_G = KernelSpec("constant", (), 1)
AR2 = KernelSpec("attraction_repulsion", (), 2)
ST2 = KernelSpec("stokes_like", (), 2)


def test_binary_interaction_examples():
    k = Kernels(AR2, ST2)
    x, y = np.array([0.3, -0.2]), np.array([1.0, 0.5])
    assert np.array_equal(binary_interaction(x, y, 0, 1, [1.0, 2.0], [3.0, 4.0], 0.0, k), x)
    np.testing.assert_array_equal(binary_interaction(x, y, 1, 0, [1.0, 2.0], [3.0, 4.0], 0.25, k),
                                  x + 0.25 * np.array([1.0, 2.0]))
    hand = binary_interaction([0.5], [2.0], 0, 1, [0.0], [3.0], 0.1, Kernels(zero(1), UNIT_G))
    assert abs(hand[0] - 0.8) <= 1e-15


def test_limit_kernel_examples():
    k = Kernels(LINEAR, UNIT_G)
    assert limit_kernel([1.0], [0.0], [2.0], [4.0], 0.5, k)[0] == 1.75
    k2 = Kernels(AR2, ST2)
    x, y = np.array([0.1, 0.9]), np.array([-0.4, 0.3])
    u, us = np.array([0.7, -1.1]), np.array([2.0, 0.5])
    np.testing.assert_array_equal(limit_kernel(x, y, u, us, 1.0, k2), u)
    np.testing.assert_array_equal(limit_kernel(x, y, u, us, 0.0, k2), eval_h(AR2, x - y))


@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.3, 0.5, 1.0]))
def test_expectation_of_binary_interaction_is_limit_kernel(seed, p):
    rng = np.random.default_rng(seed)
    k = Kernels(AR2, ST2)
    x, y, u, us = rng.normal(size=(4, 2))
    alpha = rng.uniform(0, 0.5)
    mean = sum(((p if a else 1 - p) * (p if b else 1 - p)) * binary_interaction(x, y, a, b, u, us, alpha, k)
               for a, b in itertools.product((0, 1), repeat=2))
    np.testing.assert_allclose(mean, x + alpha * limit_kernel(x, y, u, us, p, k), rtol=0, atol=1e-14)


def controls(u=0.5, u_star=1.0, T=1.0, d=1):
    return KineticControls.constant(np.full(d, u), np.full(d, u_star), T)


def test_step_with_zero_strength_is_identity():
    ens = KineticEnsemble(np.random.default_rng(0).normal(size=(50, 1)), 0.4, seed=2)
    nxt = boltzmann_step(ens, 1.0, 0.0, 1.0, controls(), Kernels(LINEAR, UNIT_G))
    assert np.array_equal(nxt.samples, ens.samples) and nxt.step == 1 and nxt.time == 1.0


def test_fully_controlled_ensemble_translates():
    ens = KineticEnsemble(np.random.default_rng(1).normal(size=(40, 2)), 1.0, seed=5)
    nxt = boltzmann_step(ens, 10.0, 0.1, 0.1, controls(0.5, 1.0, d=2), Kernels(AR2, ST2))
    np.testing.assert_array_equal(nxt.samples, ens.samples + 0.1 * 0.5)


def test_odd_population_leaves_one_agent_alone():
    ens = KineticEnsemble(np.arange(7.0), 1.0, seed=0)
    nxt = boltzmann_step(ens, 1.0, 0.5, 1.0, controls(), Kernels.zero(1))
    assert np.sum(nxt.samples[:, 0] == ens.samples[:, 0]) == 1


def test_rate_above_one_is_a_config_error():
    ens = KineticEnsemble(np.zeros(4), 0.5)
    with pytest.raises(ConfigError):
        boltzmann_step(ens, 2.0, 0.1, 1.0, controls(), Kernels.zero(1))


def test_uncontrolled_attraction_keeps_the_mean():
    rng = np.random.default_rng(3)
    ens = KineticEnsemble(rng.normal(size=(1000, 1)), 0.0, seed=9)
    nxt = boltzmann_step(ens, 10.0, 0.1, 0.1, controls(), Kernels(LINEAR, UNIT_G))
    # every pair moves symmetrically toward its midpoint, so the sum is exact up to roundoff
    assert abs(nxt.samples.mean() - ens.samples.mean()) <= 3 * ens.samples.std() / np.sqrt(1000)
    assert abs(nxt.samples.mean() - ens.samples.mean()) <= 1e-12


@given(st.integers(0, 10_000), st.integers(2, 300), st.floats(0.0, 1.0))
def test_step_preserves_count_and_pairs_are_disjoint(seed, M, rate):
    first, second = draw_pairs(step_rng(seed, 0), M, rate)
    both = np.concatenate([first, second])
    assert np.unique(both).size == both.size
    ens = KineticEnsemble(np.random.default_rng(seed).normal(size=(M, 1)), 0.5, seed=seed)
    assert boltzmann_step(ens, rate, 0.1, 1.0, controls(), Kernels(LINEAR, UNIT_G)).size == M


def test_pair_update_uses_pre_step_states():
    ens = KineticEnsemble(np.random.default_rng(4).normal(size=(20, 1)), 0.0, seed=1)
    k = Kernels(LINEAR, zero(1))
    nxt = boltzmann_step(ens, 1.0, 0.3, 1.0, controls(), k)
    rng = step_rng(1, 0)
    first, second = draw_pairs(rng, 20, 1.0)
    x, y = ens.samples[first], ens.samples[second]
    np.testing.assert_array_equal(nxt.samples[first], x + 0.3 * (y - x))
    np.testing.assert_array_equal(nxt.samples[second], y + 0.3 * (x - y))


def test_runs_are_reproducible():
    ens = KineticEnsemble(box_sampler(-1, 1)(0, 100), 0.3, seed=7)
    a = run_boltzmann(ens, 0.1, 1.0, controls(), Kernels(LINEAR, UNIT_G))
    b = run_boltzmann(ens, 0.1, 1.0, controls(), Kernels(LINEAR, UNIT_G))
    assert np.array_equal(a[1], b[1])


def test_limit_solver_reductions():
    atoms = box_sampler(-1, 1)(0, 60)
    k = Kernels(KernelSpec("attraction_repulsion", (), 1), KernelSpec("stokes_like", (), 1))
    lim = solve_limit_pde(atoms, 0.0, controls(), k, 1.0, 0.05)
    mf = solve_meanfield(atoms, np.zeros((0, 1)), ControlSignal.zeros(0, 1, 1.0),
                         Kernels(k.h, zero(1)), 0.05)
    assert np.array_equal(lim.atoms, mf.atoms)
    moved = solve_limit_pde(atoms, 1.0, controls(0.5), k, 1.0, 0.05)
    np.testing.assert_allclose(moved.atoms - atoms, np.broadcast_to(0.5 * moved.times[:, None, None], moved.atoms.shape),
                               rtol=0, atol=1e-14)
    half = solve_limit_pde(atoms, 0.5, controls(), k, 1.0, 0.05)
    assert all(abs(half.measure(n).mass - 1.0) <= 1e-12 for n in range(len(half.times)))
    assert np.isfinite(half.radius)


def test_fully_controlled_sweep_is_flat_in_eps():
    sampler = box_sampler(-1, 1)
    table = quasi_invariant_sweep([0.2, 0.1], 200, 1.0, controls(), Kernels(LINEAR, UNIT_G), 1.0, sampler)
    assert all(r.max_w1 <= 1e-12 for r in table.rows)
    assert list(table.medians()) == [0.2, 0.1]
