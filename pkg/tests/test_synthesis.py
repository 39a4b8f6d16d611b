import math
from fractions import Fraction

import numpy as np
import pytest

from pseudohinf import synthesis as syn
from pseudohinf.pendulum import lcmd
from pseudohinf.riccati import solve_stabilizing
from pseudohinf.synthesis import (
    Controller,
    RationalitySearchError,
    SynthesisError,
    SynthesisParams,
    are_x_lagrange,
    are_y_lagrange,
    close_loop,
    grid_search,
    lagrange_output_feedback_uncontrollable,
    lagrange_output_feedback_unobservable,
    lagrange_state_feedback,
    newton_to_rational,
    output_feedback_pseudo_hinf_v1,
    output_feedback_pseudo_hinf_v2,
    rationality_search,
    state_feedback_pseudo_hinf,
    synthesize,
    tau_scaling_normalize,
    weighted_plant,
)
from pseudohinf.systems import Plant
from pseudohinf.three_pendulums import three_pendulum_plant


def _plant(A, B1, C1, B2=None, C2=None, D12=None, D21=None):
    A = np.atleast_2d(A)
    n, m = A.shape[0], np.shape(B1)[1]
    q = 0 if B2 is None else np.shape(B2)[1]
    p = 0 if C2 is None else np.shape(C2)[0]
    return Plant(A, B1, np.zeros((n, q)) if B2 is None else B2, C1, np.zeros((p, n)) if C2 is None else C2,
                 np.zeros((m, q)) if D12 is None else D12, np.zeros((p, m)) if D21 is None else D21)


def _names(checks):
    return [c.name for c in checks]


# -- parameters and controllers --------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        SynthesisParams(-0.1, (1.0,))
    with pytest.raises(ValueError):
        SynthesisParams(0.5, (1.0, 0.0))
    with pytest.raises(ValueError):
        SynthesisParams(0.5, (1.0,), tau0=0.0)
    with pytest.raises(ValueError):
        SynthesisParams(0.5, (1.0, 2.0), mu=(1.0,))
    p = SynthesisParams(0.5, (3.0, 4.0))
    assert np.linalg.norm(p.normalized().tau) == pytest.approx(1.0)
    np.testing.assert_allclose(np.diag(p.w), [1 / 3, 1 / 4])


def test_controller_roundtrip_and_dims(ring_result, ring_plant):
    ctrl = ring_result.controller
    again = Controller.from_dict(ctrl.to_dict())
    for k in ("Ac", "Bc", "Cc"):
        np.testing.assert_array_equal(getattr(again, k), getattr(ctrl, k))
    with pytest.raises(ValueError):
        close_loop(ring_plant, Controller.static(np.zeros((1, 6))))
    with pytest.raises(ValueError):
        Controller.from_dict({"kind": "neural"})


# -- theorem 6 on the three-pendulum ring ------------------------------------------------


def test_ring_theorem6(ring_result):
    r = ring_result
    assert r.ok
    assert _names(r.checks)[:3] == ["Assumption 1", "Assumption 2", "Assumption 3"]
    assert r.X.inertia.as_tuple() == (6, 0, 0)
    assert r.Y.inertia.as_tuple() == (5, 1, 0)
    assert r.rho_xy == pytest.approx(0.168051, abs=1e-5)
    assert r.lagrange.holds and r.lagrange.margin < -0.2
    np.testing.assert_array_equal(r.certificate.d_bar[:6], [1, 0, 1, 0, 1, 0])
    assert r.certificate.nu == (Fraction(1),) * 3 and r.certificate.p_bar == 1


def test_ring_closed_loop_structure(ring_result):
    cl = ring_result.closed_loop
    eig = np.linalg.eigvals(cl.a + 0.5 * np.eye(cl.n))
    assert np.sum(eig.real > 0) == 1
    np.testing.assert_allclose(cl.a @ ring_result.certificate.d_bar, 0.0, atol=1e-12)


def test_ring_rebuild_bit_for_bit(ring_plant, ring_bank, ring_params, ring_result):
    again = lagrange_output_feedback_unobservable(ring_plant, ring_bank, ring_params)
    for k in ("Ac", "Bc", "Cc"):
        np.testing.assert_array_equal(getattr(again.controller, k), getattr(ring_result.controller, k))


def test_as_printed_ring_fails_assumption3(ring_bank, ring_params):
    with pytest.raises(SynthesisError) as exc:
        lagrange_output_feedback_unobservable(three_pendulum_plant(as_printed=True), ring_bank, ring_params)
    assert exc.value.condition == "Assumption 3"


def test_theorem9_needs_uncontrollable_mode(ring_plant, ring_bank, ring_params):
    with pytest.raises(SynthesisError) as exc:
        lagrange_state_feedback(ring_plant, ring_bank, ring_params)
    assert exc.value.condition == "Assumption 5"


def test_dispatch_errors(ring_plant):
    with pytest.raises(ValueError):
        synthesize(8, ring_plant)
    with pytest.raises(ValueError):
        synthesize(6, ring_plant)


# -- theorem 3 ----------------------------------------------------------------------------


def test_theorem3_scalar_oracle():
    # A=1, B1=2, B2=1, C1=0, D12=1: 2P + 3P^2 = 0 -> P = -2/3, K = 2/3, A+B2K = 5/3
    plant = _plant([[1.0]], [[2.0]], [[0.0]], B2=[[1.0]], D12=[[1.0]])
    r = state_feedback_pseudo_hinf(plant)
    assert r.ok
    assert r.X.P[0, 0] == pytest.approx(-2 / 3, abs=1e-12)
    assert r.controller.K[0, 0] == pytest.approx(2 / 3, abs=1e-12)
    assert r.gain.peak_gain == pytest.approx(0.8, abs=1e-9)  # |(2/3) * 2 / (s - 5/3)| peaks at s = 0
    assert r.theorem1.certified


def test_theorem3_fails_without_control_penalty():
    plant = _plant([[1.0]], [[2.0]], [[1.0]], B2=[[1.0]], D12=[[0.0]])
    with pytest.raises(SynthesisError) as exc:
        state_feedback_pseudo_hinf(plant)
    assert exc.value.condition == "Assumption 1"


# -- theorems 4 and 5 ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def weighted(ring_plant, ring_bank, ring_params):
    return weighted_plant(ring_plant, ring_params.with_bank(ring_bank))


def test_theorem5_on_weighted_ring(weighted):
    r = output_feedback_pseudo_hinf_v2(weighted)
    assert r.ok
    assert r.gain.peak_gain < 1.0
    assert r.X.inertia.as_tuple() == (6, 0, 0) and r.Y.inertia.as_tuple() == (5, 1, 0)


def test_theorem4_is_dual_of_theorem5(weighted):
    r5 = output_feedback_pseudo_hinf_v2(weighted)
    r4 = output_feedback_pseudo_hinf_v1(weighted.transpose_dual())
    assert r4.ok
    assert r4.gain.peak_gain == pytest.approx(r5.gain.peak_gain, rel=1e-9)
    np.testing.assert_allclose(r4.controller.Ac, r5.controller.Ac.T, atol=1e-9 * np.abs(r5.controller.Ac).max())
    np.testing.assert_allclose(r4.controller.Bc, r5.controller.Cc.T, atol=1e-9 * np.abs(r5.controller.Cc).max())


def test_theorem4_wrong_inertia_names_i():
    # stable scalar plant: X is positive, theorem 4 needs it pseudo-positive definite
    plant = _plant([[-1.0]], [[0.5]], [[0.5]], B2=[[1.0]], C2=[[1.0]], D12=[[1.0]], D21=[[1.0]])
    with pytest.raises(SynthesisError) as exc:
        output_feedback_pseudo_hinf_v1(plant)
    assert exc.value.condition == "(i)"


def test_coupling_failure_names_iii(weighted, monkeypatch):
    monkeypatch.setattr(syn, "spectral_radius", lambda M: 1.5)
    with pytest.raises(SynthesisError) as exc:
        output_feedback_pseudo_hinf_v2(weighted)
    assert exc.value.condition == "(iii)"
    assert "rho(XY) = 1.5" in str(exc.value)
    assert [c.passed for c in exc.value.checks][-1] is False


def test_missing_measurement_is_assumption2():
    plant = _plant([[1.0]], [[1.0]], [[0.0]], B2=[[1.0]], D12=[[1.0]])
    with pytest.raises(SynthesisError) as exc:
        output_feedback_pseudo_hinf_v1(plant)
    assert exc.value.condition == "Assumption 2"


# -- theorems 7 and 9 ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def dual(ring_plant):
    return ring_plant.transpose_dual()


@pytest.mark.parametrize("fn,theorem", [(lagrange_output_feedback_uncontrollable, 7), (lagrange_state_feedback, 9)])
def test_dual_ring_lagrange(dual, ring_bank, ring_params, fn, theorem):
    r = fn(dual, ring_bank, ring_params)
    assert r.ok and r.theorem == theorem
    cl = r.closed_loop
    np.testing.assert_allclose(cl.a @ r.certificate.d_bar, 0.0, atol=1e-9)
    nu = np.array([float(v) for v in r.certificate.nu])
    np.testing.assert_allclose(nu * ring_bank.periods, ring_params.tau0 * (cl.c @ r.certificate.d_bar), atol=1e-8)


@pytest.mark.parametrize("fn,cond", [(lagrange_output_feedback_uncontrollable, "IV"), (lagrange_state_feedback, "II")])
def test_irrational_nu_names_condition(dual, ring_bank, ring_params, fn, cond):
    with pytest.raises(SynthesisError) as exc:
        fn(dual, ring_bank, ring_params, max_den=10)
    assert exc.value.condition == cond
    assert "not rational" in str(exc.value)


def test_theorem9_gain_formula(dual, ring_bank, ring_params):
    r = lagrange_state_feedback(dual, ring_bank, ring_params)
    p = r.params
    E1 = dual.D12.T @ p.m_tau @ dual.D12
    K = -np.linalg.solve(E1, dual.D12.T @ p.m_tau @ dual.C1 + dual.B2.T @ r.X.P)
    np.testing.assert_allclose(r.controller.K, K, rtol=1e-12, atol=1e-12)


# -- scaling --------------------------------------------------------------------------------


def test_tau_scaling_scalar():
    X, Y, tau = tau_scaling_normalize(np.array([[1.0]]), np.array([[0.5]]), (1.0,), 2.0)
    assert X[0, 0] == 2.0 and Y[0, 0] == 0.25 and tau == (2.0,)
    X, Y, tau = tau_scaling_normalize(np.array([[1.0]]), np.array([[0.5]]), (1.0,), 1.0)
    assert X[0, 0] == 1.0 and Y[0, 0] == 0.5
    with pytest.raises(ValueError):
        tau_scaling_normalize(None, None, (1.0,), 0.0)


@pytest.mark.parametrize("gamma", [0.5, 2.0, 10.0])
def test_tau_scaling_matches_resolve(ring_plant, ring_bank, ring_params, gamma):
    p = ring_params.with_bank(ring_bank)
    X = solve_stabilizing(are_x_lagrange(ring_plant, p)).P
    Y = solve_stabilizing(are_y_lagrange(ring_plant, p)).P
    Xs, Ys, tau = tau_scaling_normalize(X, Y, p.tau, gamma)
    q = SynthesisParams(p.lam, tau, p.tau0, p.mu)
    X2 = solve_stabilizing(are_x_lagrange(ring_plant, q)).P
    Y2 = solve_stabilizing(are_y_lagrange(ring_plant, q)).P
    assert np.linalg.norm(X2 - Xs) <= 1e-8 * np.linalg.norm(Xs)
    assert np.linalg.norm(Y2 - Ys) <= 1e-8 * np.linalg.norm(Ys)


# -- rationality search ---------------------------------------------------------------------


def test_search_zero_steps_when_rational(dual, ring_bank, ring_params):
    res = rationality_search(dual, ring_bank, ring_params, theorem=7)
    assert res.steps == 0 and res.distance == 0.0


@pytest.mark.parametrize("theorem", [7, 9])
def test_search_reaches_rational_nu(dual, ring_bank, ring_params, theorem):
    res = rationality_search(dual, ring_bank, ring_params, eps=0.05, theorem=theorem, max_den=1000)
    assert res.steps >= 1 and res.distance <= 0.05
    assert all((res.p_bar * v).denominator == 1 for v in res.nu)
    assert res.p_bar == lcmd(res.nu) <= 1000
    assert abs(res.jacobian_det_scaled) > 0
    fn = lagrange_output_feedback_uncontrollable if theorem == 7 else lagrange_state_feedback
    r = fn(dual, ring_bank, res.params, max_den=1000)
    assert r.ok and r.certificate.nu == res.nu


def test_search_singular_jacobian():
    f = lambda x: np.array([x[0] + x[1], x[0] + x[1]]) + math.pi
    with pytest.raises(RationalitySearchError, match="Jacobian"):
        newton_to_rational(f, [0.1, 0.2], eps=0.05)


def test_newton_scalar():
    x, target, steps, _ = newton_to_rational(lambda x: np.array([math.sqrt(2) * x[0] ** 2]), [1.0], eps=0.1,
                                             max_den=100)
    assert steps >= 1 and abs(x[0] - 1.0) <= 0.1
    assert abs(math.sqrt(2) * x[0] ** 2 - target[0]) < 1e-12
    assert Fraction(float(target[0])).limit_denominator(100) == Fraction(float(target[0])).limit_denominator(10**9)


def test_search_rejects_other_theorems(dual, ring_bank, ring_params):
    with pytest.raises(ValueError):
        rationality_search(dual, ring_bank, ring_params, theorem=6)


def test_grid_search_deterministic(ring_plant, ring_bank):
    a = grid_search(ring_plant, ring_bank, 6, tau0=2 * math.pi, lambdas=(0.5,))
    b = grid_search(ring_plant, ring_bank, 6, tau0=2 * math.pi, lambdas=(0.5,))
    assert a.ok and a.extras["grid_point"] == b.extras["grid_point"]
    np.testing.assert_array_equal(a.controller.Ac, b.controller.Ac)
