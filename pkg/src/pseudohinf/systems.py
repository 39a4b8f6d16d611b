"""State-space containers shared by the analysis and synthesis modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = ["LtiSystem", "Plant", "ClosedLoop", "RationalMatrix", "to_float"]

RationalMatrix = list[list[Fraction]]

PLANT_FIELDS = ("A", "B1", "B2", "C1", "C2", "D12", "D21")


def _mat(M, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1) if cols in (None, 1) else M.reshape(1, -1)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def to_float(M: RationalMatrix) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in M], dtype=float).reshape(len(M), -1)


@dataclass(frozen=True)
class LtiSystem:
    """Realization of ``G(s) = C (sI - A)^{-1} B``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = _mat(self.a)
        if a.shape[0] != a.shape[1]:
            raise ValueError("A must be square")
        n = a.shape[0]
        b = _mat(self.b).reshape(n, -1)
        c = _mat(self.c).reshape(-1, n)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def transpose(self) -> "LtiSystem":
        return LtiSystem(self.a.T, self.c.T, self.b.T)


@dataclass(frozen=True)
class Plant:
    """Linear part of the controlled system.

    ``x' = A x + B1 w + B2 u``, ``z = C1 x + D12 u``, ``y = C2 x + D21 w``
    with ``x`` in R^n, ``w, z`` in R^m, ``u`` in R^q and ``y`` in R^p.

    ``exact`` optionally keeps the same data as exact rationals so that
    kernel vectors and Kalman transformations can be built without rounding.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    exact: dict[str, RationalMatrix] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        A = _mat(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B1 = _mat(self.B1).reshape(n, -1)
        B2 = _mat(self.B2).reshape(n, -1)
        C1 = _mat(self.C1).reshape(-1, n)
        C2 = _mat(self.C2).reshape(-1, n) if np.size(self.C2) else np.zeros((0, n))
        m, q, p = B1.shape[1], B2.shape[1], C2.shape[0]
        if C1.shape[0] != m:
            raise ValueError(f"C1 has {C1.shape[0]} rows but B1 has {m} columns (m must agree)")
        D12 = _mat(self.D12).reshape(m, q) if np.size(self.D12) else np.zeros((m, q))
        D21 = _mat(self.D21).reshape(p, m) if np.size(self.D21) else np.zeros((p, m))
        for name, M in zip(PLANT_FIELDS, (A, B1, B2, C1, C2, D12, D21)):
            object.__setattr__(self, name, M)

    @classmethod
    def from_rational(cls, **mats: RationalMatrix) -> "Plant":
        exact = {k: [[Fraction(v) for v in row] for row in mats[k]] for k in PLANT_FIELDS if k in mats}
        floats = {k: to_float(v) for k, v in exact.items()}
        n = floats["A"].shape[0]
        m = floats["B1"].shape[1]
        floats.setdefault("B2", np.zeros((n, 0)))
        floats.setdefault("C2", np.zeros((0, n)))
        p = floats["C2"].shape[0]
        q = floats["B2"].shape[1]
        floats.setdefault("D12", np.zeros((m, q)))
        floats.setdefault("D21", np.zeros((p, m)))
        return cls(**floats, exact=exact)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B1.shape[1]

    @property
    def q(self) -> int:
        return self.B2.shape[1]

    @property
    def p(self) -> int:
        return self.C2.shape[0]

    def transpose_dual(self) -> "Plant":
        """Dual plant ``(A', C1', C2', B1', B2', D21', D12')``."""
        exact = None
        if self.exact is not None and all(k in self.exact for k in PLANT_FIELDS):
            t = {k: [list(col) for col in zip(*self.exact[k])] for k in PLANT_FIELDS}
            exact = {"A": t["A"], "B1": t["C1"], "B2": t["C2"], "C1": t["B1"], "C2": t["B2"],
                     "D12": t["D21"], "D21": t["D12"]}
        return Plant(self.A.T, self.C1.T, self.C2.T, self.B1.T, self.B2.T, self.D21.T, self.D12.T,
                     exact=exact)

    def open_loop(self) -> LtiSystem:
        """Channel ``w -> z`` with ``u = 0``."""
        return LtiSystem(self.A, self.B1, self.C1)


@dataclass(frozen=True)
class ClosedLoop:
    """Interconnection ``x' = A x + B w``, ``z = C x``, ``w = phi(z)``.

    For dynamic controllers the state is ordered ``[x; x_c]``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_plant: int
    bank: object | None = None

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def lti(self) -> LtiSystem:
        return LtiSystem(self.a, self.b, self.c)
