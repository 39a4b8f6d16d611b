"""Pseudo strict bounded real certificates.

A system ``G(s) = C(sI - A)^{-1} B`` is *pseudo strict bounded real* when
``A`` has exactly one eigenvalue in the open right half-plane (the rest in
the open left half-plane) and ``sup_w sigma_max(G(jw)) < 1``. The frequency
conditions here are checked on a sampled grid with local refinement around
the running peak; verdicts are labeled ``grid-certified`` accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .numlin import Inertia, eigenvalues, is_pseudo_hurwitz, is_pseudo_positive_definite, max_singular_value
from .riccati import AreProblem, Branch, RiccatiError, solve_branch
from .systems import LtiSystem

__all__ = [
    "LtiSystem",
    "SweepGrid",
    "SbrVerdict",
    "Theorem1Certificate",
    "LagrangeVerdict",
    "ShiftedPoleError",
    "frequency_response",
    "check_gain_condition",
    "check_theorem1",
    "check_lagrange_frequency",
    "lagrange_sweep_table",
    "minimality_margin",
]

MARGIN_FLOOR = 1e-9
POLE_COND_MAX = 1e12


class ShiftedPoleError(ArithmeticError):
    """``(jw - lambda) I - A`` is singular at the requested frequency."""


@dataclass(frozen=True)
class SweepGrid:
    omega_min: float = 1e-4
    omega_max: float = 1e4
    points: int = 400
    include_zero: bool = True
    refine_passes: int = 3

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("a sweep grid needs at least 2 points")
        if not (0 < self.omega_min < self.omega_max):
            raise ValueError("need 0 < omega_min < omega_max")
        if self.refine_passes < 0:
            raise ValueError("refine_passes must be non-negative")

    def omegas(self) -> np.ndarray:
        w = np.logspace(np.log10(self.omega_min), np.log10(self.omega_max), self.points)
        return np.concatenate([[0.0], w]) if self.include_zero else w


def frequency_response(sys: LtiSystem, omega: float, shift: float = 0.0) -> np.ndarray:
    """``C ((j omega - shift) I - A)^{-1} B``."""
    n = sys.n
    M = (1j * omega - shift) * np.eye(n) - sys.a
    if n and np.linalg.cond(M) > POLE_COND_MAX:
        raise ShiftedPoleError(f"pole on the shifted axis at omega={omega:g}, shift={shift:g}")
    return sys.c @ linalg.solve(M, sys.b.astype(complex))


def _sweep(fn, grid: SweepGrid):
    """Evaluate ``fn(omega)`` on the grid, then refine around the running peak.

    Returns (omegas, values, skipped) sorted by omega; ``fn`` returns a scalar
    to be maximized and may raise :class:`ShiftedPoleError`.
    """
    values: dict[float, float] = {}
    skipped: list[float] = []

    def visit(w: float):
        if w in values or w in skipped:
            return
        try:
            values[w] = float(fn(w))
        except ShiftedPoleError:
            skipped.append(w)

    for w in grid.omegas():
        visit(float(w))
    for _ in range(grid.refine_passes):
        if not values:
            break
        ws = np.array(sorted(values))
        k = int(np.argmax([values[w] for w in ws]))
        lo = ws[max(k - 1, 0)]
        hi = ws[min(k + 1, len(ws) - 1)]
        # split each side of the peak into thirds
        for a, b in ((lo, ws[k]), (ws[k], hi)):
            if b > a:
                visit(a + (b - a) / 3.0)
                visit(a + 2.0 * (b - a) / 3.0)
    ws = np.array(sorted(values))
    return ws, np.array([values[w] for w in ws]), skipped


@dataclass(frozen=True)
class SbrVerdict:
    pseudo_hurwitz: bool
    peak_gain: float
    peak_omega: float
    margin: float
    holds: bool
    skipped_omegas: tuple[float, ...] = ()
    label: str = "grid-certified"


def check_gain_condition(sys: LtiSystem, grid: SweepGrid | None = None) -> SbrVerdict:
    """Pseudo-Hurwitz ``A`` and ``sup_w sigma_max(G(jw)) < 1`` on the grid."""
    grid = grid or SweepGrid()
    ph = is_pseudo_hurwitz(sys.a) if sys.n else False
    if sys.c.size == 0 or sys.b.size == 0 or not np.any(sys.c) or not np.any(sys.b):
        peak, w_peak, skipped = 0.0, 0.0, []
    else:
        ws, vals, skipped = _sweep(lambda w: max_singular_value(frequency_response(sys, w)), grid)
        k = int(np.argmax(vals))
        peak, w_peak = float(vals[k]), float(ws[k])
    margin = 1.0 - peak
    return SbrVerdict(
        pseudo_hurwitz=ph,
        peak_gain=peak,
        peak_omega=w_peak,
        margin=margin,
        holds=bool(ph and margin > MARGIN_FLOOR),
        skipped_omegas=tuple(skipped),
    )


@dataclass(frozen=True)
class Theorem1Certificate:
    """Outcome of the Riccati-based sufficient test for pseudo strict bounded realness.

    ``status`` is ``certified``, ``not-certified`` (both branches solved, no
    qualifying P) or ``inconclusive`` (no branch could be solved).
    """

    status: str
    P: np.ndarray | None = None
    branch: Branch | None = None
    inertia: Inertia | None = None
    closure_eigenvalues: np.ndarray | None = None
    notes: tuple[str, ...] = field(default=())

    @property
    def certified(self) -> bool:
        return self.status == "certified"


def check_theorem1(sys: LtiSystem) -> Theorem1Certificate:
    """Search the stabilizing, then anti-stabilizing, solution of ``A'P + PA + PBB'P + C'C = 0``.

    Certifies when a found ``P`` is pseudo-positive definite and
    ``A + BB'P`` has no eigenvalues in the imaginary-axis band.
    """
    prob = AreProblem(sys.a, sys.b @ sys.b.T, sys.c.T @ sys.c)
    notes = []
    solved = 0
    for branch in (Branch.STABILIZING, Branch.ANTI_STABILIZING):
        try:
            sol = solve_branch(prob, branch)
        except RiccatiError as exc:
            notes.append(f"{branch.value}: {exc}")
            continue
        solved += 1
        spec = eigenvalues(sol.closure_matrix)
        if not is_pseudo_positive_definite(sol.P):
            notes.append(f"{branch.value}: inertia {sol.inertia} is not pseudo-positive definite")
            continue
        if spec.imaginary_count:
            notes.append(f"{branch.value}: closure has eigenvalues on the imaginary axis")
            continue
        return Theorem1Certificate("certified", sol.P, branch, sol.inertia, spec.eigenvalues, tuple(notes))
    status = "not-certified" if solved else "inconclusive"
    return Theorem1Certificate(status, notes=tuple(notes))


@dataclass(frozen=True)
class LagrangeVerdict:
    """Sampled check of ``G*(jw - l) M_tau G(jw - l) < M_mu^-1 M_tau M_mu^-1``.

    ``margin`` is the largest eigenvalue of the difference over the grid
    (negative means the inequality holds); ``peak_weighted_gain`` is the same
    test in scaled form, ``sigma_max(M_tau^1/2 G M_mu M_tau^-1/2) < 1``.
    """

    holds: bool
    margin: float
    margin_omega: float
    peak_weighted_gain: float
    infinity_margin: float
    skipped_omegas: tuple[float, ...] = ()
    label: str = "grid-certified"


def _weights(tau, mu, m: int):
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (m,))
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (m,))
    if np.any(tau <= 0) or np.any(mu <= 0):
        raise ValueError("tau and mu must be positive")
    return tau, mu


def _lagrange_point(sys: LtiSystem, lam: float, tau: np.ndarray, mu: np.ndarray, w: float):
    G = frequency_response(sys, w, lam)
    bound = np.diag(tau / mu**2)
    H = G.conj().T @ np.diag(tau) @ G - bound
    margin = float(np.max(linalg.eigvalsh(0.5 * (H + H.conj().T))))
    scaled = np.sqrt(tau)[:, None] * G * (mu / np.sqrt(tau))[None, :]
    return margin, max_singular_value(scaled)


def check_lagrange_frequency(sys: LtiSystem, lam: float, tau, mu, grid: SweepGrid | None = None) -> LagrangeVerdict:
    """Frequency inequality of the Lagrange stability criterion on a grid of ``w >= 0``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    grid = grid or SweepGrid()
    m = sys.c.shape[0]
    if sys.b.shape[1] != m:
        raise ValueError("the criterion needs a square channel (as many nonlinearity inputs as outputs)")
    tau, mu = _weights(tau, mu, m)
    gains: dict[float, float] = {}

    def margin_at(w):
        mg, g = _lagrange_point(sys, lam, tau, mu, w)
        gains[w] = g
        return mg

    ws, vals, skipped = _sweep(margin_at, grid)
    k = int(np.argmax(vals))
    # strictly proper: the limit w -> inf of the difference is -M_mu^-1 M_tau M_mu^-1
    infinity_margin = float(np.max(-tau / mu**2))
    worst = max(float(vals[k]), infinity_margin)
    return LagrangeVerdict(
        holds=bool(worst < -MARGIN_FLOOR),
        margin=worst,
        margin_omega=float(ws[k]),
        peak_weighted_gain=float(max(gains.values())),
        infinity_margin=infinity_margin,
        skipped_omegas=tuple(skipped),
    )


def lagrange_sweep_table(sys: LtiSystem, lam: float, tau, mu, omegas) -> list[tuple[float, float, float]]:
    """Rows ``(omega, weighted peak singular value, margin)`` for plotting; poles are skipped."""
    m = sys.c.shape[0]
    tau, mu = _weights(tau, mu, m)
    rows = []
    for w in omegas:
        try:
            mg, g = _lagrange_point(sys, lam, tau, mu, float(w))
        except ShiftedPoleError:
            continue
        rows.append((float(w), g, mg))
    return rows


def minimality_margin(sys: LtiSystem) -> float:
    """Smallest PBH singular value over the eigenvalues of ``A``, relative to the data scale.

    ``min_k min(sigma_min([A - l_k I, B]), sigma_min([A - l_k I; C]))``; zero
    means the realization is not minimal.
    """
    n = sys.n
    if n == 0:
        return float("inf")
    scale = max(np.linalg.norm(sys.a), np.linalg.norm(sys.b), np.linalg.norm(sys.c), np.finfo(float).tiny)
    worst = np.inf
    for lam in np.linalg.eigvals(sys.a):
        M = sys.a - lam * np.eye(n)
        sc = linalg.svdvals(np.hstack([M, sys.b]))[n - 1] if sys.b.shape[1] + n >= n else 0.0
        so = linalg.svdvals(np.vstack([M, sys.c]))[n - 1]
        worst = min(worst, sc, so)
    return float(worst / scale)
