"""Game-type algebraic Riccati equations.

Solves ``A'P + PA + PRP + Q = 0`` where ``R`` may be sign-indefinite, via
the invariant subspaces of the Hamiltonian

    H = [[ A,   R ],
         [-Q, -A' ]]

The stable subspace ``[X1; X2]`` gives the stabilizing solution
``P = X2 X1^{-1}`` (closure ``A + RP`` Hurwitz); the unstable subspace gives
the anti-stabilizing one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg

from .numlin import (
    DichotomyError,
    Inertia,
    as_square,
    eigenvalues,
    inertia_symmetric,
    stable_invariant_subspace,
)

__all__ = [
    "AreProblem",
    "Branch",
    "RiccatiSolution",
    "RiccatiError",
    "NoDichotomyError",
    "NoSolutionError",
    "solve_stabilizing",
    "solve_anti_stabilizing",
    "solve_branch",
    "residual",
    "residual_matrix",
    "check_riccati_inequality",
]

COND_MAX = 1e12


class RiccatiError(ArithmeticError):
    pass


class NoDichotomyError(RiccatiError):
    """The Hamiltonian has eigenvalues on (or too near) the imaginary axis."""


class NoSolutionError(RiccatiError):
    """The selected invariant subspace is not a graph subspace (X1 singular)."""


class Branch(str, Enum):
    STABILIZING = "stabilizing"
    ANTI_STABILIZING = "anti-stabilizing"


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class AreProblem:
    """Data of ``A'P + PA + PRP + Q = 0``."""

    a: np.ndarray
    r: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        a = as_square(self.a, "A")
        r = as_square(self.r, "R")
        q = as_square(self.q, "Q")
        n = a.shape[0]
        if r.shape[0] != n or q.shape[0] != n:
            raise ValueError(f"A, R, Q must share dimension {n}; got {r.shape}, {q.shape}")
        for name, M in (("R", r), ("Q", q)):
            if np.linalg.norm(M - M.T) > 1e-8 * max(np.linalg.norm(M), 1.0):
                raise ValueError(f"{name} is not symmetric")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "r", _sym(r))
        object.__setattr__(self, "q", _sym(q))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def hamiltonian(self) -> np.ndarray:
        return np.block([[self.a, self.r], [-self.q, -self.a.T]])

    def transformed(self, T: np.ndarray) -> "AreProblem":
        """Problem in coordinates ``x = T xi``: solution maps as ``P -> T' P T``."""
        Ti = np.linalg.inv(T)
        return AreProblem(Ti @ self.a @ T, Ti @ self.r @ Ti.T, T.T @ self.q @ T)


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    closure_matrix: np.ndarray
    kind: Branch
    inertia: Inertia
    residual_norm: float
    x1_condition: float = field(default=np.nan)

    @property
    def closure_eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.closure_matrix).eigenvalues


def residual_matrix(prob: AreProblem, P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return prob.a.T @ P + P @ prob.a + P @ prob.r @ P + prob.q


def residual(prob: AreProblem, P) -> float:
    """Frobenius norm of ``A'P + PA + PRP + Q``."""
    return float(np.linalg.norm(residual_matrix(prob, P), "fro"))


def solve_branch(prob: AreProblem, branch: Branch | str, axis_tol: float | None = None,
                 cond_max: float = COND_MAX) -> RiccatiSolution:
    branch = Branch(branch)
    H = prob.hamiltonian()
    n = prob.n
    if n == 0:
        empty = np.zeros((0, 0))
        return RiccatiSolution(empty, empty, branch, Inertia(0, 0, 0), 0.0, 1.0)
    try:
        V = stable_invariant_subspace(H, axis_tol, unstable=branch is Branch.ANTI_STABILIZING)
    except DichotomyError as exc:
        raise NoDichotomyError(f"Hamiltonian has no dichotomy: {exc}") from exc
    if V.shape[1] != n:
        raise NoDichotomyError(f"{branch.value} subspace has dimension {V.shape[1]}, expected {n}")
    X1, X2 = V[:n], V[n:]
    cond = float(np.linalg.cond(X1))
    if not np.isfinite(cond) or cond > cond_max:
        raise NoSolutionError(f"X1 is singular on the {branch.value} branch (cond {cond:.3g})")
    P = _sym(linalg.solve(X1.T, X2.T).T)
    closure = prob.a + prob.r @ P
    return RiccatiSolution(
        P=P,
        closure_matrix=closure,
        kind=branch,
        inertia=inertia_symmetric(P),
        residual_norm=residual(prob, P),
        x1_condition=cond,
    )


def solve_stabilizing(prob: AreProblem, axis_tol: float | None = None,
                      cond_max: float = COND_MAX) -> RiccatiSolution:
    """Symmetric solution with ``A + RP`` Hurwitz."""
    return solve_branch(prob, Branch.STABILIZING, axis_tol, cond_max)


def solve_anti_stabilizing(prob: AreProblem, axis_tol: float | None = None,
                           cond_max: float = COND_MAX) -> RiccatiSolution:
    """Symmetric solution with ``A + RP`` anti-Hurwitz."""
    return solve_branch(prob, Branch.ANTI_STABILIZING, axis_tol, cond_max)


def check_riccati_inequality(prob: AreProblem, P, zero_tol: float | None = None) -> bool:
    """True iff ``A'P + PA + PRP + Q`` is negative definite by more than ``zero_tol``.

    The default band is ``1e-8`` times the size of the individual terms, so
    an exact solution of the equation (residual at round-off) is rejected.
    """
    P = np.asarray(P, dtype=float)
    S = _sym(residual_matrix(prob, P))
    if zero_tol is None:
        lin = prob.a.T @ P
        scale = np.linalg.norm(lin + lin.T) + np.linalg.norm(P @ prob.r @ P) + np.linalg.norm(prob.q)
        zero_tol = 1e-8 * max(scale, np.finfo(float).tiny)
    return bool(np.all(linalg.eigvalsh(S) < -zero_tol))
