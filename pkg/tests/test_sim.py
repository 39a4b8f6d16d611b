import math

import numpy as np
import pytest

from pseudohinf.pendulum import NonlinearityBank
from pseudohinf.sim import (
    SimConfig,
    boundedness_scan,
    convergence_order,
    default_threshold,
    shift_invariance_test,
    simulate,
    simulate_batch,
    step_halving_difference,
)
from pseudohinf.systems import ClosedLoop


def linear(a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[0]
    return ClosedLoop(a, np.zeros((n, 1)), np.zeros((1, n)), n, None)


@pytest.fixture
def damped_pendulum():
    # theta'' + 0.5 theta' + sin theta = 0
    return ClosedLoop(np.array([[0.0, 1.0], [0.0, -0.5]]), np.array([[0.0], [-1.0]]), np.array([[1.0, 0.0]]), 2,
                      NonlinearityBank.sines(1))


def test_config_validation():
    for bad in (dict(dt=0.0), dict(dt=-1e-3), dict(dt=float("nan")), dict(t_final=0.0), dict(record_stride=0)):
        with pytest.raises(ValueError):
            SimConfig(**bad)
    cfg = SimConfig(1.0, 0.1, (1, 2))
    assert cfg.steps == 10 and cfg.x0 == (1.0, 2.0)
    assert cfg.with_dt(0.05).steps == 20


def test_exponential_decay():
    traj = simulate(linear([[-1.0]]), SimConfig(1.0, 1e-3), [1.0])
    assert abs(traj.final_state[0] - math.exp(-1.0)) <= 1e-6
    assert traj.bounded and traj.sup_norm == 1.0
    assert len(traj.times) == 1001 and traj.times[-1] == pytest.approx(1.0)


def test_linear_rotation_matches_expm():
    from scipy.linalg import expm

    a = np.array([[0.0, 2.0], [-2.0, -0.1]])
    x0 = np.array([1.0, -0.5])
    traj = simulate(linear(a), SimConfig(3.0, 1e-3), x0)
    np.testing.assert_allclose(traj.final_state, expm(3.0 * a) @ x0, atol=1e-10)


def test_damped_pendulum_energy(damped_pendulum):
    traj = simulate(damped_pendulum, SimConfig(30.0, 1e-2), [math.pi / 2, 0.0])
    th, om = traj.states.T
    energy = 0.5 * om**2 + 1.0 - np.cos(th)
    assert np.all(np.diff(energy) <= 1e-9)
    assert traj.sup_norm <= math.pi
    assert abs(traj.final_state).max() < 1e-2


def test_record_stride(damped_pendulum):
    full = simulate(damped_pendulum, SimConfig(2.0, 0.01), [1.0, 0.0])
    thin = simulate(damped_pendulum, SimConfig(2.0, 0.01, record_stride=10), [1.0, 0.0])
    assert len(thin.times) == 21
    np.testing.assert_array_equal(thin.states, full.states[::10])


def test_batch_matches_single(damped_pendulum):
    x0s = np.array([[1.0, 0.0], [-2.0, 1.0], [3.0, -1.0]]).T
    cfg = SimConfig(5.0, 0.01)
    batch = simulate_batch(damped_pendulum, x0s, cfg)
    for j, t in enumerate(batch):
        np.testing.assert_allclose(t.states, simulate(damped_pendulum, cfg, x0s[:, j]).states, atol=1e-13)


def test_divergence_truncates():
    traj = simulate(linear([[50.0]]), SimConfig(100.0, 0.01), [1.0])
    assert traj.diverged and not traj.bounded
    assert traj.truncation_time is not None and traj.truncation_time < 100.0
    assert traj.sup_norm == float("inf")


def test_dimension_checks(damped_pendulum):
    with pytest.raises(ValueError):
        simulate(damped_pendulum, SimConfig(1.0, 0.1), [1.0])
    with pytest.raises(ValueError):
        simulate(damped_pendulum, SimConfig(1.0, 0.1))


def test_threshold_default():
    assert default_threshold([0.0, -3.0]) == 4e3


def test_convergence_order(damped_pendulum):
    order = convergence_order(damped_pendulum, SimConfig(5.0, 0.05), [2.0, 0.5])
    assert order >= 3.5


def test_ring_bounded_and_step_halving(ring_result):
    cfg = SimConfig(20.0, 1e-3, (-math.pi / 4, 4, -math.pi / 2, -3, math.pi / 3, -5) + (0.0,) * 6)
    traj = simulate(ring_result.closed_loop, cfg)
    assert traj.bounded and traj.sup_norm < 20.0
    assert step_halving_difference(ring_result.closed_loop, SimConfig(5.0, 1e-2), cfg.x0) < 1e-6


def test_ring_shift_invariance(ring_result):
    cfg = SimConfig(20.0, 1e-3, (0.3, -1.0, 0.5, 2.0, -0.7, 0.0) + (0.0,) * 6, record_stride=100)
    rep = shift_invariance_test(ring_result.closed_loop, ring_result.certificate, cfg)
    assert rep.max_deviation <= 1e-6
    zero = shift_invariance_test(ring_result.closed_loop, np.zeros(12), cfg)
    assert zero.max_deviation == 0.0


def test_shift_by_non_lattice_vector_detected(damped_pendulum):
    cfg = SimConfig(20.0, 1e-2, (0.5, 0.0))
    good = shift_invariance_test(damped_pendulum, [2 * math.pi, 0.0], cfg)
    bad = shift_invariance_test(damped_pendulum, [math.pi, 0.0], cfg)
    assert good.max_deviation <= 1e-9
    assert bad.max_deviation > 1.0


def test_shift_dimension_mismatch(damped_pendulum):
    with pytest.raises(ValueError):
        shift_invariance_test(damped_pendulum, [1.0], SimConfig(1.0, 0.1, (0.0, 0.0)))


def test_scan_linear():
    stable = boundedness_scan(linear([[-1.0, 0.0], [0.0, -2.0]]), np.eye(2) * 5, SimConfig(5.0, 0.01))
    assert stable.all_bounded
    growing = boundedness_scan(linear([[1.0]]), [[1.0], [0.0]], SimConfig(10.0, 0.01))
    assert growing.bounded.tolist() == [False, True]


def test_scan_threads_agree(damped_pendulum, monkeypatch):
    seeds = np.random.default_rng(0).uniform(-5, 5, (8, 2))
    cfg = SimConfig(3.0, 0.01)
    one = boundedness_scan(damped_pendulum, seeds, cfg)
    monkeypatch.setenv("PSEUDOHINF_THREADS", "3")
    three = boundedness_scan(damped_pendulum, seeds, cfg)
    np.testing.assert_array_equal(one.sup_norms, three.sup_norms)


def test_ring_scan(ring_result, rng):
    seeds = np.hstack([rng.uniform(-10, 10, (20, 6)), np.zeros((20, 6))])
    rep = boundedness_scan(ring_result.closed_loop, seeds, SimConfig(10.0, 1e-2))
    assert rep.all_bounded
