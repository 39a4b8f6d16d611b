"""Pendulum-likeness machinery.

Periodic sector-bounded nonlinearities, kernel directions of singular
system matrices, Kalman-type decompositions that isolate a zero mode, and
the rational lattice certificate: if ``A d = 0`` and every
``nu_i = tau0 * (C d)_i / Delta_i`` is a non-zero rational, shifting the
state by ``LCMD(nu) * tau0 * d`` maps solutions to solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import linalg

from .systems import Plant, RationalMatrix, to_float

__all__ = [
    "PendulumError",
    "AssumptionError",
    "NotSingleZeroModeError",
    "RationalityError",
    "DegenerateOutputError",
    "NonlinearityKind",
    "ScaledSine",
    "NonlinearityBank",
    "SectorCheck",
    "verify_sector",
    "kernel_direction",
    "rationalize",
    "lcmd",
    "exact_nullspace",
    "exact_inverse",
    "KalmanDecomposition",
    "decompose_unobservable",
    "decompose_uncontrollable",
    "PendulumCertificate",
    "pendulum_certificate",
]

MAX_DEN = 10**6
RATIONAL_TOL = 1e-9
KERNEL_REL_TOL = 1e-9
GAP_FACTOR = 1e3
INT64_MAX = 2**63 - 1


class PendulumError(ValueError):
    pass


class AssumptionError(PendulumError):
    """A structural assumption on the plant does not hold."""

    def __init__(self, assumption: str, message: str):
        super().__init__(f"{assumption}: {message}")
        self.assumption = assumption


class NotSingleZeroModeError(PendulumError):
    pass


class RationalityError(PendulumError):
    pass


class DegenerateOutputError(PendulumError):
    pass


# -- nonlinearities ---------------------------------------------------------


class NonlinearityKind(str, Enum):
    SCALED_SINE = "scaled_sine"


@dataclass(frozen=True)
class ScaledSine:
    """``phi(z) = amplitude * sin(2 pi z / period)``, declared sector bound ``mu``."""

    amplitude: float = 1.0
    period: float = 2 * math.pi
    mu: float = 1.0
    kind: NonlinearityKind = NonlinearityKind.SCALED_SINE

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.mu <= 0:
            raise ValueError("sector bound mu must be positive")

    def __call__(self, z):
        return self.amplitude * np.sin((2 * np.pi / self.period) * z)

    @property
    def slope_at_zero(self) -> float:
        return abs(self.amplitude) * 2 * np.pi / self.period


_KINDS = {NonlinearityKind.SCALED_SINE: ScaledSine}


@dataclass(frozen=True)
class NonlinearityBank:
    entries: tuple[ScaledSine, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def sines(cls, m: int, amplitude: float = 1.0, period: float = 2 * math.pi, mu: float = 1.0):
        return cls(tuple(ScaledSine(amplitude, period, mu) for _ in range(m)))

    @classmethod
    def from_dicts(cls, specs: Sequence[dict]) -> "NonlinearityBank":
        entries = []
        for spec in specs:
            kind = NonlinearityKind(spec.get("kind", "scaled_sine"))
            args = {k: float(spec[k]) for k in ("amplitude", "period", "mu") if k in spec}
            entries.append(_KINDS[kind](**args))
        return cls(tuple(entries))

    def to_dicts(self) -> list[dict]:
        return [{"kind": e.kind.value, "amplitude": e.amplitude, "period": e.period, "mu": e.mu}
                for e in self.entries]

    @property
    def m(self) -> int:
        return len(self.entries)

    @property
    def periods(self) -> np.ndarray:
        return np.array([e.period for e in self.entries])

    @property
    def mu(self) -> np.ndarray:
        return np.array([e.mu for e in self.entries])

    def __call__(self, z: np.ndarray) -> np.ndarray:
        """Apply ``phi_i`` row-wise; ``z`` has shape ``(m,)`` or ``(m, k)``."""
        z = np.asarray(z, dtype=float)
        return self.evaluator(z.ndim)(z)

    def evaluator(self, ndim: int = 1):
        """Fast callable for arrays of shape ``(m,)`` (``ndim=1``) or ``(m, k)`` (``ndim=2``)."""
        if all(isinstance(e, ScaledSine) for e in self.entries):
            amp = np.array([e.amplitude for e in self.entries])
            freq = 2 * np.pi / self.periods
            if ndim == 2:
                amp, freq = amp[:, None], freq[:, None]
            return lambda z: amp * np.sin(freq * z)
        return lambda z: np.stack([e(zi) for e, zi in zip(self.entries, z)])


@dataclass(frozen=True)
class SectorCheck:
    index: int
    passed: bool
    worst_ratio: float
    worst_z: float
    offending: tuple[float, ...] = ()


def verify_sector(bank: NonlinearityBank, samples: int = 1000, seed: int = 0) -> list[SectorCheck]:
    """Sampled check of ``|phi_i(z) / z| <= mu_i`` and of the declared period.

    Each entry is probed on ``samples`` points spread over one period on
    either side of zero, close to zero, and at random points over ten periods.
    """
    if samples < 100:
        raise ValueError("use at least 100 samples per period")
    rng = np.random.default_rng(seed)
    out = []
    for i, phi in enumerate(bank.entries):
        d = phi.period
        grid = np.linspace(-d, d, 2 * samples + 1)
        near0 = d * np.logspace(-8, -1, samples // 4)
        z = np.concatenate([grid, near0, -near0, rng.uniform(-10 * d, 10 * d, samples)])
        z = z[z != 0]
        ratio = np.abs(phi(z) / z)
        k = int(np.argmax(ratio))
        bad = z[ratio > phi.mu * (1 + 1e-12)]
        shift_err = np.max(np.abs(phi(z + d) - phi(z)))
        periodic = shift_err <= 1e-9 * max(1.0, abs(phi.amplitude))
        out.append(SectorCheck(i, bool(bad.size == 0 and periodic), float(ratio[k]), float(z[k]),
                               tuple(float(v) for v in np.sort(bad)[:10])))
    return out


# -- kernels and exact arithmetic --------------------------------------------


def kernel_direction(A, tol: float | None = None, gap_factor: float = GAP_FACTOR) -> np.ndarray:
    """Unit vector spanning a one-dimensional null space of ``A``.

    The sign is fixed so that the largest-magnitude component is positive.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    scale = max(float(np.linalg.norm(A, "fro")), np.finfo(float).tiny)
    tol = KERNEL_REL_TOL * scale if tol is None else float(tol)
    _, s, Vt = linalg.svd(A)
    n = A.shape[1]
    s = np.concatenate([s, np.zeros(n - len(s))])
    if s[-1] > tol:
        raise NotSingleZeroModeError(f"matrix is nonsingular (smallest singular value {s[-1]:.3g})")
    if n > 1 and s[-2] <= tol * gap_factor:
        raise NotSingleZeroModeError(
            f"null space is not one-dimensional (second smallest singular value {s[-2]:.3g})"
        )
    d = Vt[-1].copy()
    if d[np.argmax(np.abs(d))] < 0:
        d = -d
    return d


def _frac_matrix(M) -> RationalMatrix:
    return [[Fraction(v) for v in row] for row in M]


def _rref(M: RationalMatrix) -> tuple[RationalMatrix, list[int]]:
    R = [row[:] for row in M]
    rows = len(R)
    cols = len(R[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(cols):
        p = next((i for i in range(r, rows) if R[i][c] != 0), None)
        if p is None:
            continue
        R[r], R[p] = R[p], R[r]
        piv = R[r][c]
        R[r] = [v / piv for v in R[r]]
        for i in range(rows):
            if i != r and R[i][c] != 0:
                f = R[i][c]
                R[i] = [a - f * b for a, b in zip(R[i], R[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return R, pivots


def exact_nullspace(M: RationalMatrix, ncols: int | None = None) -> tuple[list[list[Fraction]], list[int]]:
    """Null-space basis of a rational matrix and the free (pivot-complement) columns.

    Basis vector ``k`` has a 1 in free column ``free[k]`` and 0 in the other free columns.
    """
    ncols = len(M[0]) if M else (ncols or 0)
    R, pivots = _rref(M) if M else ([], [])
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -R[i][f]
        basis.append(v)
    return basis, free


def exact_inverse(M: RationalMatrix) -> RationalMatrix:
    n = len(M)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    R, pivots = _rref(aug)
    if pivots[:n] != list(range(n)):
        raise ZeroDivisionError("matrix is singular")
    return [row[n:] for row in R]


def _first_convergent(v: float, max_den: int, tol: float) -> Fraction:
    """First continued-fraction convergent within ``tol`` of ``v``; else the best one with ``q <= max_den``."""
    x = Fraction(v)
    h0, h1, k0, k1 = 0, 1, 1, 0
    rest = x
    while True:
        a = math.floor(rest)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > max_den:
            return x.limit_denominator(max_den)
        f = Fraction(h1, k1)
        if abs(float(f - x)) <= tol or f == x:
            return f
        rest = 1 / (rest - a)


def rationalize(x, max_den: int = MAX_DEN, tol: float = RATIONAL_TOL) -> list[Fraction]:
    """Rational approximations from continued fractions, denominators at most ``max_den``.

    Each entry becomes its first convergent within ``tol`` (the simplest
    fraction the expansion offers at that accuracy). Raises
    :class:`RationalityError` when no convergent with an admissible
    denominator is within ``tol`` or the entry rounds to zero.
    """
    if max_den < 1:
        raise ValueError("max_den must be at least 1")
    out = []
    for i, v in enumerate(np.atleast_1d(np.asarray(x, dtype=float))):
        if not np.isfinite(v):
            raise RationalityError(f"entry {i} is not finite")
        f = _first_convergent(float(v), int(max_den), tol)
        if f == 0:
            raise RationalityError(f"entry {i} ({v:.6g}) is zero")
        if abs(float(f) - v) > tol:
            raise RationalityError(
                f"entry {i} ({float(v)!r}) is not rational within {tol:g} using denominators <= {max_den}"
            )
        out.append(f)
    return out


def lcmd(nu: Sequence[Fraction]) -> int:
    """Least common multiple of the denominators (fractions in lowest terms)."""
    dens = []
    for v in nu:
        v = Fraction(v)
        if v == 0:
            raise ValueError("LCMD is defined for non-zero entries only")
        dens.append(v.denominator)
    out = math.lcm(*dens) if dens else 1
    if out > INT64_MAX:
        raise OverflowError("LCMD exceeds the 64-bit integer range")
    return out


# -- Kalman-type decompositions ---------------------------------------------


@dataclass(frozen=True)
class KalmanDecomposition:
    """Coordinates ``x = T xi`` isolating ``l`` zero modes in the last ``l`` states.

    ``unobservable``: ``T^-1 A T = [[A1, 0], [A2, 0]]`` and ``C2 T = [C2a, 0]``.
    ``uncontrollable``: ``T^-1 A T = [[A1, A2], [0, 0]]`` and ``T^-1 B2 = [B2a; 0]``.
    """

    flavor: str
    T: np.ndarray
    T_inv: np.ndarray
    l: int
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    structure_residual: float
    T_exact: RationalMatrix | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def k(self) -> int:
        return self.n - self.l

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.T))

    @property
    def A1(self) -> np.ndarray:
        return self.A[: self.k, : self.k]

    @property
    def A2(self) -> np.ndarray:
        if self.flavor == "unobservable":
            return self.A[self.k:, : self.k]
        return self.A[: self.k, self.k:]

    @property
    def B2a(self) -> np.ndarray:
        return self.B2[: self.k]

    @property
    def C2a(self) -> np.ndarray:
        return self.C2[:, : self.k]

    @property
    def C2b(self) -> np.ndarray:
        return self.C2[:, self.k:]

    @property
    def zero_mode(self) -> np.ndarray:
        """``T e_n`` (last column of ``T``)."""
        return self.T[:, -1].copy()


def _float_nullspace(M: np.ndarray, n: int):
    scale = max(float(np.linalg.norm(M, "fro")), np.finfo(float).tiny)
    tol = KERNEL_REL_TOL * scale
    if M.shape[0] == 0:
        return np.eye(n), list(range(n))
    _, s, Vt = linalg.svd(M)
    s = np.concatenate([s, np.zeros(n - len(s))])
    l = int(np.sum(s <= tol))
    if l == 0:
        return np.zeros((n, 0)), []
    N = Vt[-l:].T
    _, _, piv = linalg.qr(N.T, pivoting=True)
    rows = sorted(int(i) for i in piv[:l])
    # normalize so that the selected rows form the identity (mirrors the exact RREF basis)
    N = N @ np.linalg.inv(N[rows])
    N[np.abs(N) < 1e-14 * np.max(np.abs(N))] = 0.0
    return N, rows


def _basis_transform(N: np.ndarray, rows: list[int], n: int) -> np.ndarray:
    others = [i for i in range(n) if i not in rows]
    E = np.eye(n)[:, others]
    return np.hstack([E, N])


def _exact_basis_transform(basis, free, n) -> RationalMatrix:
    others = [i for i in range(n) if i not in free]
    cols = [[Fraction(int(i == j)) for i in range(n)] for j in others] + basis
    return [[cols[j][i] for j in range(n)] for i in range(n)]


def _stack_exact(*blocks: RationalMatrix) -> RationalMatrix:
    out = []
    for b in blocks:
        out.extend(row[:] for row in b)
    return out


def _transpose(M: RationalMatrix) -> RationalMatrix:
    return [list(col) for col in zip(*M)]


def _has_exact(plant: Plant, keys) -> bool:
    return plant.exact is not None and all(k in plant.exact for k in keys)


def _transform_all(plant: Plant, T: np.ndarray, Ti: np.ndarray):
    return dict(A=Ti @ plant.A @ T, B1=Ti @ plant.B1, B2=Ti @ plant.B2, C1=plant.C1 @ T, C2=plant.C2 @ T)


def decompose_unobservable(plant: Plant, rational: bool | None = None, T=None) -> KalmanDecomposition:
    """Place the zero modes with ``A x = 0, C2 x = 0`` last.

    With exact plant data (or ``rational=True``) the transformation is built
    by exact rational elimination, so ``T`` has rational entries. A user
    supplied ``T`` is validated instead of constructed.
    """
    n = plant.n
    T_exact = None
    if T is not None:
        T = np.asarray(T, dtype=float)
        l = _declared_l(plant, T, "unobservable")
    elif (rational is None and _has_exact(plant, ("A", "C2"))) or rational:
        ex = plant.exact if _has_exact(plant, ("A", "C2")) else {
            "A": _frac_matrix(plant.A), "C2": _frac_matrix(plant.C2)}
        basis, free = exact_nullspace(_stack_exact(ex["A"], ex["C2"]), n)
        l = len(basis)
        if l == 0:
            raise AssumptionError("Assumption 3", "no non-zero x with A x = 0 and C2 x = 0")
        T_exact = _exact_basis_transform(basis, free, n)
        T = to_float(T_exact)
    else:
        N, rows = _float_nullspace(np.vstack([plant.A, plant.C2]), n)
        l = N.shape[1]
        if l == 0:
            raise AssumptionError("Assumption 3", "no non-zero x with A x = 0 and C2 x = 0")
        T = _basis_transform(N, rows, n)
    Ti = to_float(exact_inverse(T_exact)) if T_exact is not None else np.linalg.inv(T)
    mats = _transform_all(plant, T, Ti)
    k = n - l
    res = max(np.linalg.norm(mats["A"][:, k:]), np.linalg.norm(mats["C2"][:, k:]) if plant.p else 0.0)
    scale = max(np.linalg.norm(plant.A) + np.linalg.norm(plant.C2), 1.0) * max(np.linalg.norm(T), 1.0)
    if res > 1e-9 * scale:
        raise AssumptionError("Assumption 3", f"transformation does not expose the zero mode (residual {res:.3g})")
    return KalmanDecomposition("unobservable", T, Ti, l, structure_residual=res, T_exact=T_exact, **mats)


def decompose_uncontrollable(plant: Plant, rational: bool | None = None, T=None) -> KalmanDecomposition:
    """Dual of :func:`decompose_unobservable`: zero modes with ``x'A = 0, x'B2 = 0`` placed last."""
    n = plant.n
    T_exact = None
    if T is not None:
        T = np.asarray(T, dtype=float)
        l = _declared_l(plant, T, "uncontrollable")
        Ti = np.linalg.inv(T)
    elif (rational is None and _has_exact(plant, ("A", "B2"))) or rational:
        ex = plant.exact if _has_exact(plant, ("A", "B2")) else {
            "A": _frac_matrix(plant.A), "B2": _frac_matrix(plant.B2)}
        basis, free = exact_nullspace(_stack_exact(_transpose(ex["A"]), _transpose(ex["B2"])), n)
        l = len(basis)
        if l == 0:
            raise AssumptionError("Assumption 5", "no non-zero x with x'A = 0 and x'B2 = 0")
        S = _transpose(_exact_basis_transform(basis, free, n))
        T_exact = exact_inverse(S)
        T, Ti = to_float(T_exact), to_float(S)
    else:
        N, rows = _float_nullspace(np.vstack([plant.A.T, plant.B2.T]), n)
        l = N.shape[1]
        if l == 0:
            raise AssumptionError("Assumption 5", "no non-zero x with x'A = 0 and x'B2 = 0")
        Ti = _basis_transform(N, rows, n).T
        T = np.linalg.inv(Ti)
    mats = _transform_all(plant, T, Ti)
    k = n - l
    res = max(np.linalg.norm(mats["A"][k:, :]), np.linalg.norm(mats["B2"][k:, :]))
    scale = max(np.linalg.norm(plant.A) + np.linalg.norm(plant.B2), 1.0) * max(np.linalg.norm(Ti), 1.0)
    if res > 1e-9 * scale:
        raise AssumptionError("Assumption 5", f"transformation does not expose the zero mode (residual {res:.3g})")
    return KalmanDecomposition("uncontrollable", T, Ti, l, structure_residual=res, T_exact=T_exact, **mats)


def _declared_l(plant: Plant, T: np.ndarray, flavor: str) -> int:
    # for a user supplied T, l is the number of trailing zero-mode columns/rows it exposes
    Ti = np.linalg.inv(T)
    At = Ti @ plant.A @ T
    n = plant.n
    scale = 1e-9 * max(np.linalg.norm(plant.A), 1.0) * np.linalg.cond(T)
    l = 0
    for j in range(n - 1, -1, -1):
        if flavor == "unobservable":
            col = np.concatenate([At[:, j], (plant.C2 @ T)[:, j]])
        else:
            col = np.concatenate([At[j, :], (Ti @ plant.B2)[j, :]])
        if np.linalg.norm(col) > scale:
            break
        l += 1
    if l == 0:
        which = "Assumption 3" if flavor == "unobservable" else "Assumption 5"
        raise AssumptionError(which, "supplied T does not isolate a zero mode")
    return l


# -- certificates -------------------------------------------------------------


@dataclass(frozen=True)
class PendulumCertificate:
    d_bar: np.ndarray
    chi: np.ndarray
    nu: tuple[Fraction, ...]
    p_bar: int
    tau0: float
    lattice_vector: np.ndarray
    kernel_residual: float

    def to_dict(self) -> dict:
        return {
            "d_bar": self.d_bar.tolist(),
            "chi": self.chi.tolist(),
            "nu": [str(v) for v in self.nu],
            "p_bar": self.p_bar,
            "tau0": self.tau0,
            "lattice_vector": self.lattice_vector.tolist(),
            "kernel_residual": self.kernel_residual,
        }


def pendulum_certificate(a_cl, c_cl, bank: NonlinearityBank, tau0: float, d_bar=None,
                         max_den: int = MAX_DEN, tol: float = RATIONAL_TOL) -> PendulumCertificate:
    """Lattice certificate for ``x' = A x + B phi(C x)``.

    ``d_bar`` defaults to the kernel direction of ``a_cl`` scaled so its
    largest entry is +1 (any non-zero multiple is admissible; this one keeps
    simple rational structure visible). Passing the direction produced by a
    rational Kalman transformation keeps ``nu`` rational when the data are.
    """
    if tau0 <= 0:
        raise ValueError("tau0 must be positive")
    a_cl = np.atleast_2d(np.asarray(a_cl, dtype=float))
    c_cl = np.atleast_2d(np.asarray(c_cl, dtype=float))
    if d_bar is None:
        d = kernel_direction(a_cl)
        d = d / np.max(np.abs(d))
    else:
        d = np.asarray(d_bar, dtype=float).ravel()
    dn = float(np.linalg.norm(d))
    if dn == 0:
        raise DegenerateOutputError("kernel direction is zero")
    res = float(np.linalg.norm(a_cl @ d))
    if res > KERNEL_REL_TOL * max(np.linalg.norm(a_cl), 1.0) * dn:
        raise NotSingleZeroModeError(f"A d is not zero (residual {res:.3g})")
    chi = c_cl @ d
    small = np.abs(chi) <= 1e-12 * max(np.linalg.norm(c_cl), 1.0) * dn
    if np.any(small):
        raise DegenerateOutputError(f"C_i d = 0 for outputs {np.flatnonzero(small).tolist()}")
    nu = rationalize(tau0 * chi / bank.periods, max_den, tol)
    p = lcmd(nu)
    return PendulumCertificate(d, chi, tuple(nu), p, float(tau0), p * tau0 * d, res)
