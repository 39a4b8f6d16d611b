import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pseudohinf.riccati import (
    AreProblem,
    Branch,
    NoDichotomyError,
    NoSolutionError,
    check_riccati_inequality,
    residual,
    solve_anti_stabilizing,
    solve_branch,
    solve_stabilizing,
)
from pseudohinf.numlin import eigenvalues


def mixed_problem(rng, n):
    A = rng.standard_normal((n, n))
    B1 = 0.3 * rng.standard_normal((n, 2))
    B2 = rng.standard_normal((n, 2))
    C = rng.standard_normal((2, n))
    return AreProblem(A, B1 @ B1.T - B2 @ B2.T, C.T @ C)


def test_scalar_oracle():
    # a=1, r=-1, q=3: p^2 r + 2 a p + q = 0 -> -p^2 + 2p + 3 = 0 -> p in {3, -1}; a + r p < 0 -> p = 3
    prob = AreProblem([[1.0]], [[-1.0]], [[3.0]])
    sol = solve_stabilizing(prob)
    assert sol.P[0, 0] == pytest.approx(3.0, abs=1e-9)
    assert sol.closure_matrix[0, 0] == pytest.approx(-2.0, abs=1e-9)
    anti = solve_anti_stabilizing(prob)
    assert anti.P[0, 0] == pytest.approx(-1.0, abs=1e-9)


def test_scalar_game_oracle():
    # a=-1, r=+1/4 (disturbance-dominated), q=1: p^2/4 - 2p + 1 = 0 -> p = 4 -/+ 2 sqrt(3)
    sol = solve_stabilizing(AreProblem([[-1.0]], [[0.25]], [[1.0]]))
    assert sol.P[0, 0] == pytest.approx(4 - 2 * np.sqrt(3), abs=1e-9)
    anti = solve_anti_stabilizing(AreProblem([[-1.0]], [[0.25]], [[1.0]]))
    assert anti.P[0, 0] == pytest.approx(4 + 2 * np.sqrt(3), abs=1e-9)


def test_decoupled_2x2_oracle():
    # diagonal data decouples into two scalar equations
    A = np.diag([1.0, -2.0])
    R = np.diag([-1.0, -1.0])
    Q = np.diag([3.0, 5.0])
    sol = solve_stabilizing(AreProblem(A, R, Q))
    p2 = -2.0 + np.sqrt(4.0 + 5.0)  # -p^2 - 4p + 5 = 0, a + r p < 0
    np.testing.assert_allclose(sol.P, np.diag([3.0, p2]), atol=1e-9)


def test_symmetric_and_residual(rng):
    prob = mixed_problem(rng, 5)
    sol = solve_stabilizing(prob)
    assert np.array_equal(sol.P, sol.P.T)
    assert sol.residual_norm == pytest.approx(residual(prob, sol.P))
    assert eigenvalues(sol.closure_matrix).stable_count == 5


def test_no_dichotomy():
    # A = 0, R = 0, Q = 0: Hamiltonian is zero, all eigenvalues on the axis
    with pytest.raises(NoDichotomyError):
        solve_stabilizing(AreProblem(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2))))


def test_no_graph_subspace():
    # a = 1, r = 0, q = 0: stable subspace of diag(1, -1) is e2 -> X1 = 0
    with pytest.raises(NoSolutionError):
        solve_stabilizing(AreProblem([[1.0]], [[0.0]], [[0.0]]))


def test_validation():
    with pytest.raises(ValueError):
        AreProblem(np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))
    with pytest.raises(ValueError):
        AreProblem(np.eye(2), np.eye(3), np.eye(2))


def test_empty_problem():
    sol = solve_branch(AreProblem(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0))), Branch.STABILIZING)
    assert sol.P.shape == (0, 0)


def test_inequality_check():
    prob = AreProblem([[-1.0]], [[0.0]], [[1.0]])
    assert check_riccati_inequality(prob, [[1.0]])  # -2 + 1 < 0
    assert not check_riccati_inequality(prob, [[0.5]])  # exact solution: 0
    assert not check_riccati_inequality(prob, [[0.25]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(0, 100_000))
def test_orthogonal_similarity(n, seed):
    rng = np.random.default_rng(seed)
    prob = mixed_problem(rng, n)
    try:
        sol = solve_stabilizing(prob)
    except (NoDichotomyError, NoSolutionError):
        return
    if sol.x1_condition > 1e4:  # near the edge of solvability; not a well-posed instance
        return
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    sol2 = solve_stabilizing(prob.transformed(Q))
    assert np.linalg.norm(sol2.P - Q.T @ sol.P @ Q) <= 1e-8 * max(1.0, np.linalg.norm(sol.P))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 100_000))
def test_relative_residual(n, seed):
    rng = np.random.default_rng(seed)
    prob = mixed_problem(rng, n)
    for branch in Branch:
        try:
            sol = solve_branch(prob, branch)
        except (NoDichotomyError, NoSolutionError):
            continue
        P = sol.P
        scale = (np.linalg.norm(prob.a.T @ P) * 2 + np.linalg.norm(P @ prob.r @ P) + np.linalg.norm(prob.q))
        assert sol.residual_norm <= 1e-8 * scale
