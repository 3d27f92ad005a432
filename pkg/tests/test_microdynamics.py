import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from leadfollow.errors import ConfigError, InputError
from leadfollow.kernels import KernelSpec, Kernels, zero
from leadfollow.microdynamics import (ControlSignal, SwarmState, check_apriori_bounds, drift, growth_rate,
                                      integrate, project_ball, read_trajectory_csv, state_norm)

LINEAR = KernelSpec("linear", (), 1)  # H(xi) = -xi
UNIT_G = KernelSpec("constant", (), 1)


def test_drift_zero():
    s = SwarmState(np.zeros((2, 2)), np.ones((3, 2)))
    dY, dX = drift(s, np.zeros((2, 2)), Kernels.zero(2))
    assert not dY.any() and not dX.any()


def test_drift_follower_copies_leader():
    s = SwarmState([[0.0]], [[3.0]])
    dY, dX = drift(s, [[5.0]], Kernels(zero(1), UNIT_G))
    assert dY[0, 0] == 5.0 and dX[0, 0] == 5.0


def test_drift_attraction_pair():
    s = SwarmState([[0.0]], [[0.0], [2.0]])
    _, dX = drift(s, [[0.0]], Kernels(LINEAR, zero(1)))
    assert np.array_equal(dX[:, 0], [1.0, -1.0])


def test_g_without_leaders_is_config_error():
    s = SwarmState(np.zeros((0, 1)), [[0.0]])
    with pytest.raises(ConfigError):
        drift(s, np.zeros((0, 1)), Kernels(zero(1), UNIT_G))


def test_integrate_examples():
    c = ControlSignal.zeros(1, 1, 1.0, n_pieces=2)
    traj = integrate(SwarmState([[0.3]], [[1.0], [-2.0]]), c, Kernels.zero(1), 0.1)
    assert np.all(traj.followers == traj.followers[0]) and np.all(traj.leaders == 0.3)
    lin = integrate(SwarmState([[1.0]], [[0.0]]), ControlSignal.constant([[2.0]], 1.0), Kernels.zero(1), 0.25)
    np.testing.assert_allclose(lin.leaders[:, 0, 0], 1.0 + 2.0 * lin.times, rtol=0, atol=1e-15)
    one = integrate(SwarmState([[0.0]], [[0.0], [2.0]]), ControlSignal.zeros(1, 1, 0.1),
                    Kernels(LINEAR, zero(1)), 0.1)
    np.testing.assert_allclose(one.followers[-1, :, 0], [0.1, 1.9], rtol=0, atol=1e-15)


def test_misaligned_breakpoints_named():
    c = ControlSignal(np.array([0.0, 0.35, 1.0]), np.zeros((2, 1, 1)))
    with pytest.raises(InputError, match="0.35"):
        integrate(SwarmState([[0.0]], [[0.0]]), c, Kernels.zero(1), 0.1)


def test_control_outside_ball_rejected():
    with pytest.raises(InputError):
        ControlSignal(np.array([0.0, 1.0]), np.full((1, 1, 2), 3.0), u_max=1.0)


def test_state_norm():
    assert state_norm(SwarmState(np.zeros((1, 2)), np.zeros((2, 2)))) == 0.0
    assert state_norm(SwarmState([[3.0, 4.0]], [[0.0, 0.0]])) == 5.0
    assert state_norm(SwarmState([[1.0], [-1.0]], [[2.0], [-2.0]])) == 3.0
    with pytest.raises(InputError):
        state_norm(SwarmState(np.zeros((0, 1)), [[1.0]]))


def test_apriori_examples():
    c = ControlSignal.zeros(1, 2, 1.0)
    const = integrate(SwarmState([[1.0, 0.0]], [[0.0, 1.0]]), c, Kernels.zero(2), 0.1)
    rep = check_apriori_bounds(const, 1.0)
    assert rep.growth_ok and rep.lipschitz_constant == 0.0
    speed = np.array([0.6, 0.8])
    moving = integrate(SwarmState(np.zeros((3, 2)), np.zeros((1, 2))),
                       ControlSignal.constant(np.tile(speed, (3, 1)), 1.0, u_max=1.0), Kernels.zero(2), 0.1)
    assert math.isclose(check_apriori_bounds(moving, 1.0).lipschitz_constant, 1.0, rel_tol=1e-12)


@given(st.integers(0, 10_000), st.sampled_from(["attraction_repulsion", "stokes_like", "constant"]))
def test_apriori_growth_holds_on_catalog_runs(seed, kind):
    rng = np.random.default_rng(seed)
    kern = Kernels(KernelSpec(kind, (rng.uniform(-1, 1),), 2), KernelSpec(kind, (rng.uniform(-1, 1),), 2))
    u_max = 2.0
    vals = project_ball(rng.normal(size=(4, 2, 2)), u_max)
    traj = integrate(SwarmState(rng.normal(size=(2, 2)), rng.normal(size=(5, 2))),
                     ControlSignal(np.linspace(0, 1, 5), vals, u_max), kern, 0.05)
    assert check_apriori_bounds(traj, growth_rate(kern, u_max)).growth_ok


@given(st.integers(0, 10_000))
def test_drift_is_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    kern = Kernels(KernelSpec("stokes_like", (), 2), KernelSpec("attraction_repulsion", (), 2))
    X = rng.normal(size=(6, 2))
    perm = rng.permutation(6)
    Y = rng.normal(size=(2, 2))
    u = rng.normal(size=(2, 2))
    _, dX = drift(SwarmState(Y, X), u, kern)
    _, dXp = drift(SwarmState(Y, X[perm]), u, kern)
    np.testing.assert_allclose(dXp, dX[perm], rtol=1e-13, atol=1e-15)


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_g_part_is_affine_in_control(seed, a):
    rng = np.random.default_rng(seed)
    kern = Kernels(zero(2), KernelSpec("stokes_like", (), 2))
    s = SwarmState(rng.normal(size=(3, 2)), rng.normal(size=(4, 2)))
    u1, u2 = rng.normal(size=(2, 3, 2))
    mix = drift(s, a * u1 + (1 - a) * u2, kern)[1]
    combo = a * drift(s, u1, kern)[1] + (1 - a) * drift(s, u2, kern)[1]
    np.testing.assert_allclose(mix, combo, rtol=1e-12, atol=1e-13)


def test_followers_ignore_leaders_without_g():
    rng = np.random.default_rng(4)
    X0 = rng.normal(size=(5, 1))
    kern = Kernels(KernelSpec("attraction_repulsion", (), 1), zero(1))
    with_leaders = integrate(SwarmState(rng.normal(size=(2, 1)), X0), ControlSignal.zeros(2, 1, 1.0), kern, 0.1)
    without = integrate(SwarmState(np.zeros((0, 1)), X0), ControlSignal.zeros(0, 1, 1.0), kern, 0.1)
    assert np.array_equal(with_leaders.followers, without.followers)


def test_rk4_euler_gap_is_first_order():
    rng = np.random.default_rng(0)
    kern = Kernels(KernelSpec("attraction_repulsion", (), 1), KernelSpec("stokes_like", (), 1))
    s = SwarmState([[0.0]], rng.uniform(-1, 1, (8, 1)))
    c = ControlSignal.constant([[1.0]], 1.0)
    gaps = []
    for dt in (0.02, 0.01):
        e = integrate(s, c, kern, dt).followers[-1]
        r = integrate(s, c, kern, dt, method="rk4").followers[-1]
        gaps.append(np.max(np.abs(e - r)))
    assert 1.5 <= gaps[0] / gaps[1] <= 2.5


def test_projection_idempotent():
    rng = np.random.default_rng(2)
    u = rng.normal(size=(50, 3, 2)) * 3
    p = project_ball(u, 1.5)
    assert np.array_equal(project_ball(p, 1.5), p)
    assert np.all(np.linalg.norm(p, axis=-1) <= 1.5 * (1 + 1e-12))
    assert not project_ball(u, 0.0).any()


def test_trajectory_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    traj = integrate(SwarmState(rng.normal(size=(2, 2)), rng.normal(size=(3, 2))),
                     ControlSignal.constant(rng.normal(size=(2, 2)), 0.2), Kernels.zero(2), 0.05)
    traj.to_csv(tmp_path / "t.csv")
    head = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert head == "t,Y_1_1,Y_1_2,Y_2_1,Y_2_2,X_1_1,X_1_2,X_2_1,X_2_2,X_3_1,X_3_2"
    t, Y, X = read_trajectory_csv(tmp_path / "t.csv")
    assert np.array_equal(t, traj.times) and np.array_equal(Y, traj.leaders) and np.array_equal(X, traj.followers)
