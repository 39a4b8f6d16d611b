"""Dense linear-algebra kernel.

Eigenvalue counting relative to the imaginary axis, symmetric inertia,
singular values and ordered invariant subspaces. Everything here is a pure
function of its inputs; the heavy lifting is delegated to LAPACK through
numpy/scipy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

__all__ = [
    "Spectrum",
    "Inertia",
    "DichotomyError",
    "as_square",
    "default_tol",
    "eigenvalues",
    "inertia_symmetric",
    "is_pseudo_hurwitz",
    "is_pseudo_positive_definite",
    "max_singular_value",
    "spectral_radius",
    "stable_invariant_subspace",
]

REL_TOL = 1e-8
SYMMETRY_TOL = 1e-8


class DichotomyError(ArithmeticError):
    """Raised when eigenvalues sit inside the imaginary-axis band."""


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    stable_count: int
    unstable_count: int
    imaginary_count: int
    axis_tol: float

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def max_real(self) -> float:
        return float(np.max(self.eigenvalues.real)) if self.n else -np.inf


@dataclass(frozen=True)
class Inertia:
    positive: int
    negative: int
    zero: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.positive, self.negative, self.zero)

    def __iter__(self):
        return iter(self.as_tuple())

    def __str__(self) -> str:
        return f"({self.positive}, {self.negative}, {self.zero})"


def as_square(M, name: str = "matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def default_tol(M) -> float:
    """Relative band width ``1e-8 * ||M||_F`` shared by the axis and zero tests."""
    return REL_TOL * float(np.linalg.norm(M, "fro"))


def _pair_conjugates(ev: np.ndarray, scale: float) -> np.ndarray:
    # Eigenvalues of a real matrix come in exact conjugate pairs; LAPACK
    # drift is averaged away so downstream counts cannot split a pair.
    ev = ev.astype(complex)
    tiny = 1e-13 * max(scale, 1.0)
    real_mask = np.abs(ev.imag) <= tiny
    ev[real_mask] = ev[real_mask].real
    upper = [i for i in np.flatnonzero(~real_mask) if ev[i].imag > 0]
    lower = [i for i in np.flatnonzero(~real_mask) if ev[i].imag < 0]
    for i in upper:
        if not lower:
            break
        j = min(lower, key=lambda k: abs(ev[k] - np.conj(ev[i])))
        lower.remove(j)
        re = 0.5 * (ev[i].real + ev[j].real)
        im = 0.5 * (ev[i].imag - ev[j].imag)
        ev[i] = complex(re, im)
        ev[j] = complex(re, -im)
    return ev


def eigenvalues(M, axis_tol: float | None = None) -> Spectrum:
    """Eigenvalues of a real square matrix with left/right/axis counts.

    An eigenvalue counts as *imaginary* when ``|Re| <= axis_tol``
    (default ``1e-8 * ||M||_F``).
    """
    M = as_square(M)
    tol = default_tol(M) if axis_tol is None else float(axis_tol)
    ev = _pair_conjugates(linalg.eigvals(M), float(np.linalg.norm(M, "fro")))
    ev = ev[np.lexsort((ev.imag, ev.real))]
    re = ev.real
    return Spectrum(
        eigenvalues=ev,
        stable_count=int(np.sum(re < -tol)),
        unstable_count=int(np.sum(re > tol)),
        imaginary_count=int(np.sum(np.abs(re) <= tol)),
        axis_tol=tol,
    )


def _check_symmetric(S, tol: float = SYMMETRY_TOL) -> np.ndarray:
    S = as_square(S, "symmetric matrix")
    scale = max(float(np.linalg.norm(S, "fro")), 1.0)
    if np.linalg.norm(S - S.T, "fro") > tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return 0.5 * (S + S.T)


def inertia_symmetric(S, zero_tol: float | None = None) -> Inertia:
    """Counts of eigenvalues above ``zero_tol``, below ``-zero_tol`` and inside the band."""
    S = _check_symmetric(S)
    tol = default_tol(S) if zero_tol is None else float(zero_tol)
    w = linalg.eigvalsh(S)
    return Inertia(
        positive=int(np.sum(w > tol)),
        negative=int(np.sum(w < -tol)),
        zero=int(np.sum(np.abs(w) <= tol)),
    )


def is_pseudo_hurwitz(M, axis_tol: float | None = None) -> bool:
    """``n-1`` eigenvalues strictly left of the band and exactly one strictly right."""
    spec = eigenvalues(M, axis_tol)
    return spec.unstable_count == 1 and spec.stable_count == spec.n - 1


def is_pseudo_positive_definite(S, zero_tol: float | None = None) -> bool:
    n = as_square(S).shape[0]
    return inertia_symmetric(S, zero_tol).as_tuple() == (n - 1, 1, 0)


def max_singular_value(M) -> float:
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return 0.0
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return float(linalg.svdvals(M)[0])


def spectral_radius(M) -> float:
    M = as_square(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(linalg.eigvals(M))))


def stable_invariant_subspace(H, axis_tol: float | None = None, unstable: bool = False) -> np.ndarray:
    """Orthonormal basis of the invariant subspace for Re < 0 (or Re > 0 if ``unstable``).

    Uses an ordered real Schur form. Raises :class:`DichotomyError` when any
    eigenvalue lies within ``axis_tol`` of the imaginary axis.
    """
    H = as_square(H, "H")
    spec = eigenvalues(H, axis_tol)
    if spec.imaginary_count:
        raise DichotomyError(
            f"{spec.imaginary_count} eigenvalue(s) within {spec.axis_tol:.3g} of the imaginary axis"
        )
    _, Z, sdim = linalg.schur(H, output="real", sort="rhp" if unstable else "lhp")
    expected = spec.unstable_count if unstable else spec.stable_count
    if sdim != expected:
        raise DichotomyError(f"Schur reordering selected {sdim} eigenvalues, expected {expected}")
    return Z[:, :sdim]
