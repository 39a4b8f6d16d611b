"""Pseudo-H-infinity and Lagrange-stabilizing controller synthesis.

Theorem numbering follows the original development:

* 3 -- state feedback pseudo-H-infinity control,
* 4, 5 -- output feedback pseudo-H-infinity control (two dual controller forms),
* 6 -- output feedback Lagrange stabilization, plant with an unobservable zero mode,
* 7 -- output feedback Lagrange stabilization, plant with an uncontrollable zero mode,
* 8 -- Jacobian-based rationality search for theorem 7 (10 is its state feedback twin),
* 9 -- state feedback Lagrange stabilization, plant with an uncontrollable zero mode.

Every synthesis call returns the controller together with an automatic
re-verification of the closed loop; failures raise :class:`SynthesisError`
carrying a condition-by-condition report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import linalg

from .numlin import (
    eigenvalues,
    inertia_symmetric,
    is_pseudo_hurwitz,
    is_pseudo_positive_definite,
    spectral_radius,
)
from .pendulum import (
    MAX_DEN,
    RATIONAL_TOL,
    AssumptionError,
    DegenerateOutputError,
    KalmanDecomposition,
    NonlinearityBank,
    NotSingleZeroModeError,
    PendulumCertificate,
    RationalityError,
    decompose_uncontrollable,
    decompose_unobservable,
    lcmd,
    pendulum_certificate,
    rationalize,
)
from .riccati import AreProblem, Branch, RiccatiError, RiccatiSolution, solve_branch, solve_stabilizing
from .sbrl import (
    LagrangeVerdict,
    SbrVerdict,
    SweepGrid,
    Theorem1Certificate,
    check_gain_condition,
    check_lagrange_frequency,
    check_theorem1,
)
from .systems import ClosedLoop, Plant

__all__ = [
    "THEOREM_REQUIREMENTS",
    "Check",
    "SynthesisError",
    "RationalitySearchError",
    "SynthesisParams",
    "Controller",
    "SynthesisResult",
    "RationalitySearchResult",
    "close_loop",
    "weighted_plant",
    "are_x_hinf",
    "are_y_hinf",
    "are_x_lagrange",
    "are_y_lagrange",
    "controller_thm4",
    "controller_thm5",
    "controller_thm6",
    "controller_thm7",
    "gain_thm3",
    "gain_thm9",
    "state_feedback_pseudo_hinf",
    "output_feedback_pseudo_hinf_v1",
    "output_feedback_pseudo_hinf_v2",
    "lagrange_output_feedback_unobservable",
    "lagrange_output_feedback_uncontrollable",
    "lagrange_state_feedback",
    "tau_scaling_normalize",
    "newton_to_rational",
    "rationality_search",
    "grid_search",
    "synthesize",
]

INV_COND_MAX = 1e12

# Inertia demanded of each Riccati solution, per theorem. "pd": (n, 0, 0);
# "ppd": pseudo-positive definite, (n-1, 1, 0). All are stabilizing solutions
# except theorem 3, whose P may come from either branch.
THEOREM_REQUIREMENTS: dict[int, dict[str, str]] = {
    3: {"P": "ppd"},
    4: {"X": "ppd", "Y": "pd"},
    5: {"X": "pd", "Y": "ppd"},
    6: {"X": "pd", "Y": "ppd"},
    7: {"X": "ppd", "Y": "pd"},
    9: {"X": "ppd"},
}

_INERTIA_NAMES = {"pd": "positive definite", "ppd": "pseudo-positive definite"}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"condition": self.name, "passed": self.passed, "detail": self.detail}


class SynthesisError(RuntimeError):
    """A theorem's hypotheses are not met; ``checks`` lists every evaluated condition."""

    def __init__(self, theorem: int, checks: list[Check]):
        self.theorem = theorem
        self.checks = list(checks)
        failed = next((c for c in self.checks if not c.passed), None)
        self.condition = failed.name if failed else None
        msg = f"theorem {theorem}: condition {self.condition} failed"
        if failed and failed.detail:
            msg += f" ({failed.detail})"
        super().__init__(msg)


class RationalitySearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthesisParams:
    """Shift ``lam``, multipliers ``tau``, lattice scale ``tau0`` and sector bounds ``mu``."""

    lam: float
    tau: tuple[float, ...]
    tau0: float = 1.0
    mu: tuple[float, ...] | None = None

    def __post_init__(self):
        tau = tuple(float(t) for t in np.atleast_1d(self.tau))
        object.__setattr__(self, "tau", tau)
        if self.mu is not None:
            object.__setattr__(self, "mu", tuple(float(v) for v in np.atleast_1d(self.mu)))
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if any(t <= 0 for t in tau):
            raise ValueError("tau entries must be positive")
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if self.mu is not None and (len(self.mu) != len(tau) or any(v <= 0 for v in self.mu)):
            raise ValueError("mu must have one positive entry per tau entry")

    def with_bank(self, bank: NonlinearityBank | None) -> "SynthesisParams":
        if self.mu is not None or bank is None:
            return self
        return replace(self, mu=tuple(bank.mu.tolist()))

    @property
    def m_tau(self) -> np.ndarray:
        return np.diag(self.tau)

    @property
    def m_mu(self) -> np.ndarray:
        return np.diag(self.mu if self.mu is not None else np.ones(len(self.tau)))

    @property
    def w(self) -> np.ndarray:
        """``M_mu M_tau^-1 M_mu``."""
        mu = np.diag(self.m_mu)
        return np.diag(mu**2 / np.array(self.tau))

    def normalized(self) -> "SynthesisParams":
        """Same parameters with ``tau`` scaled to unit Euclidean norm."""
        g = 1.0 / float(np.linalg.norm(self.tau))
        return replace(self, tau=tuple(g * t for t in self.tau))


@dataclass(frozen=True)
class Controller:
    """Static gain ``u = K x`` or dynamic ``x_c' = Ac x_c + Bc y, u = Cc x_c``."""

    kind: str
    K: np.ndarray | None = None
    Ac: np.ndarray | None = None
    Bc: np.ndarray | None = None
    Cc: np.ndarray | None = None

    @classmethod
    def static(cls, K) -> "Controller":
        return cls("static", K=np.atleast_2d(np.asarray(K, dtype=float)))

    @classmethod
    def dynamic(cls, Ac, Bc, Cc) -> "Controller":
        return cls("dynamic", Ac=np.atleast_2d(np.asarray(Ac, dtype=float)),
                   Bc=np.atleast_2d(np.asarray(Bc, dtype=float)), Cc=np.atleast_2d(np.asarray(Cc, dtype=float)))

    def to_dict(self) -> dict:
        if self.kind == "static":
            return {"kind": "static", "K": self.K.tolist()}
        return {"kind": "dynamic", "Ac": self.Ac.tolist(), "Bc": self.Bc.tolist(), "Cc": self.Cc.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Controller":
        if d.get("kind") == "static":
            return cls.static(d["K"])
        if d.get("kind") == "dynamic":
            return cls.dynamic(d["Ac"], d["Bc"], d["Cc"])
        raise ValueError(f"unknown controller kind {d.get('kind')!r}")


def close_loop(plant: Plant, controller: Controller, bank: NonlinearityBank | None = None) -> ClosedLoop:
    """Channel ``w -> z`` of the feedback interconnection, states ordered ``[x; x_c]``."""
    if controller.kind == "static":
        K = controller.K
        if K.shape != (plant.q, plant.n):
            raise ValueError(f"gain has shape {K.shape}, expected {(plant.q, plant.n)}")
        return ClosedLoop(plant.A + plant.B2 @ K, plant.B1.copy(), plant.C1 + plant.D12 @ K, plant.n, bank)
    Ac, Bc, Cc = controller.Ac, controller.Bc, controller.Cc
    nc = Ac.shape[0]
    if Ac.shape != (nc, nc) or Bc.shape != (nc, plant.p) or Cc.shape != (plant.q, nc):
        raise ValueError("controller dimensions do not match the plant")
    a = np.block([[plant.A, plant.B2 @ Cc], [Bc @ plant.C2, Ac]])
    b = np.vstack([plant.B1, Bc @ plant.D21])
    c = np.hstack([plant.C1, plant.D12 @ Cc])
    return ClosedLoop(a, b, c, plant.n, bank)


# -- Riccati data --------------------------------------------------------------


def _solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return linalg.solve(M, rhs, assume_a="sym")


def _check_pd(M: np.ndarray, label: str, assumption: str) -> Check:
    if M.size == 0:
        return Check(assumption, False, f"{label} is empty")
    w = linalg.eigvalsh(0.5 * (M + M.T))
    ok = bool(w[0] > 1e-12 * max(1.0, w[-1]))
    return Check(assumption, ok, f"min eig of {label} = {w[0]:.6g}")


def are_x_hinf(plant: Plant) -> AreProblem:
    """Control-type Riccati equation of the pseudo-H-infinity problem (in X)."""
    E1 = plant.D12.T @ plant.D12
    Acoef = plant.A - plant.B2 @ _solve(E1, plant.D12.T @ plant.C1)
    R = plant.B1 @ plant.B1.T - plant.B2 @ _solve(E1, plant.B2.T)
    Q = plant.C1.T @ (np.eye(plant.m) - plant.D12 @ _solve(E1, plant.D12.T)) @ plant.C1
    return AreProblem(Acoef, R, Q)


def are_y_hinf(plant: Plant) -> AreProblem:
    """Filter-type Riccati equation (in Y), posed in transposed form ``A'Y + YA + YRY + Q``."""
    E2 = plant.D21 @ plant.D21.T
    Ay = plant.A - plant.B1 @ plant.D21.T @ _solve(E2, plant.C2)
    R = plant.C1.T @ plant.C1 - plant.C2.T @ _solve(E2, plant.C2)
    Q = plant.B1 @ (np.eye(plant.m) - plant.D21.T @ _solve(E2, plant.D21)) @ plant.B1.T
    return AreProblem(Ay.T, R, Q)


def _ebar(plant: Plant, params: SynthesisParams):
    E1 = plant.D12.T @ params.m_tau @ plant.D12
    E2 = plant.D21 @ params.w @ plant.D21.T
    return E1, E2


def are_x_lagrange(plant: Plant, params: SynthesisParams) -> AreProblem:
    """lambda-shifted, tau-weighted control Riccati equation (in X)."""
    Mt, W = params.m_tau, params.w
    E1, _ = _ebar(plant, params)
    n = plant.n
    Acoef = params.lam * np.eye(n) + plant.A - plant.B2 @ _solve(E1, plant.D12.T @ Mt @ plant.C1)
    R = plant.B1 @ W @ plant.B1.T - plant.B2 @ _solve(E1, plant.B2.T)
    Q = plant.C1.T @ (Mt - Mt @ plant.D12 @ _solve(E1, plant.D12.T @ Mt)) @ plant.C1
    return AreProblem(Acoef, R, Q)


def are_y_lagrange(plant: Plant, params: SynthesisParams) -> AreProblem:
    """lambda-shifted, tau-weighted filter Riccati equation (in Y), transposed form."""
    Mt, W = params.m_tau, params.w
    _, E2 = _ebar(plant, params)
    n = plant.n
    Ay = params.lam * np.eye(n) + plant.A - plant.B1 @ W @ plant.D21.T @ _solve(E2, plant.C2)
    R = plant.C1.T @ Mt @ plant.C1 - plant.C2.T @ _solve(E2, plant.C2)
    Q = plant.B1 @ (W - W @ plant.D21.T @ _solve(E2, plant.D21 @ W)) @ plant.B1.T
    return AreProblem(Ay.T, R, Q)


def weighted_plant(plant: Plant, params: SynthesisParams) -> Plant:
    """Shifted, scaled plant on which the Lagrange equations become the plain pseudo-H-infinity ones.

    ``A + lam I``, ``B1 M_mu M_tau^-1/2``, ``M_tau^1/2 C1``, ``M_tau^1/2 D12``, ``D21 M_mu M_tau^-1/2``.
    """
    st = np.sqrt(np.array(params.tau))
    mu = np.diag(params.m_mu)
    right = mu / st
    return Plant(
        plant.A + params.lam * np.eye(plant.n),
        plant.B1 * right[None, :],
        plant.B2,
        st[:, None] * plant.C1,
        plant.C2,
        st[:, None] * plant.D12,
        plant.D21 * right[None, :],
    )


# -- controller formulas ------------------------------------------------------------


def _inv_i_minus(Y: np.ndarray, X: np.ndarray, rhs: np.ndarray, left: bool = True) -> np.ndarray:
    """``(I - YX)^{-1} rhs`` (or ``rhs (I - YX)^{-1}`` when ``left`` is False) with a conditioning guard."""
    M = np.eye(X.shape[0]) - Y @ X
    if np.linalg.cond(M) > INV_COND_MAX:
        raise np.linalg.LinAlgError("I - YX is numerically singular")
    return linalg.solve(M, rhs) if left else linalg.solve(M.T, rhs.T).T


def gain_thm3(plant: Plant, P: np.ndarray) -> np.ndarray:
    E1 = plant.D12.T @ plant.D12
    return -_solve(E1, plant.B2.T @ P + plant.D12.T @ plant.C1)


def controller_thm4(plant: Plant, X: np.ndarray, Y: np.ndarray) -> Controller:
    E1 = plant.D12.T @ plant.D12
    E2 = plant.D21 @ plant.D21.T
    Cc = -_solve(E1, plant.B2.T @ X + plant.D12.T @ plant.C1)
    Bc = _inv_i_minus(Y, X, (Y @ plant.C2.T + plant.B1 @ plant.D21.T)) @ np.linalg.inv(E2)
    Ac = plant.A + plant.B2 @ Cc - Bc @ plant.C2 + (plant.B1 - Bc @ plant.D21) @ plant.B1.T @ X
    return Controller.dynamic(Ac, Bc, Cc)


def controller_thm5(plant: Plant, X: np.ndarray, Y: np.ndarray) -> Controller:
    E1 = plant.D12.T @ plant.D12
    E2 = plant.D21 @ plant.D21.T
    Bc = -(Y @ plant.C2.T + plant.B1 @ plant.D21.T) @ np.linalg.inv(E2)
    Cc = _inv_i_minus(Y, X, _solve(E1, plant.B2.T @ X + plant.D12.T @ plant.C1), left=False)
    Ac = plant.A + Bc @ plant.C2 - plant.B2 @ Cc + Y @ plant.C1.T @ (plant.C1 - plant.D12 @ Cc)
    return Controller.dynamic(Ac, Bc, Cc)


def controller_thm6(plant: Plant, params: SynthesisParams, X: np.ndarray, Y: np.ndarray) -> Controller:
    Mt, W = params.m_tau, params.w
    E1, E2 = _ebar(plant, params)
    Bc = -(Y @ plant.C2.T + plant.B1 @ W @ plant.D21.T) @ np.linalg.inv(E2)
    Cc = _inv_i_minus(Y, X, _solve(E1, plant.B2.T @ X + plant.D12.T @ Mt @ plant.C1), left=False)
    Ac = plant.A + Bc @ plant.C2 - plant.B2 @ Cc + Y @ plant.C1.T @ (Mt @ plant.C1 - Mt @ plant.D12 @ Cc)
    return Controller.dynamic(Ac, Bc, Cc)


def controller_thm7(plant: Plant, params: SynthesisParams, X: np.ndarray, Y: np.ndarray) -> Controller:
    Mt, W = params.m_tau, params.w
    E1, E2 = _ebar(plant, params)
    Cc = -_solve(E1, plant.B2.T @ X + plant.D12.T @ Mt @ plant.C1)
    Bc = _inv_i_minus(Y, X, Y @ plant.C2.T + plant.B1 @ W @ plant.D21.T) @ np.linalg.inv(E2)
    Ac = (plant.A + plant.B2 @ Cc - Bc @ plant.C2
          + (plant.B1 @ W - Bc @ plant.D21 @ W) @ plant.B1.T @ X)
    return Controller.dynamic(Ac, Bc, Cc)


def gain_thm9(plant: Plant, params: SynthesisParams, X: np.ndarray) -> np.ndarray:
    E1, _ = _ebar(plant, params)
    return -_solve(E1, plant.D12.T @ params.m_tau @ plant.C1 + plant.B2.T @ X)


# -- results --------------------------------------------------------------------------


@dataclass
class SynthesisResult:
    theorem: int
    controller: Controller
    closed_loop: ClosedLoop
    checks: list[Check]
    X: RiccatiSolution | None = None
    Y: RiccatiSolution | None = None
    rho_xy: float | None = None
    params: SynthesisParams | None = None
    gain: SbrVerdict | None = None
    theorem1: Theorem1Certificate | None = None
    lagrange: LagrangeVerdict | None = None
    certificate: PendulumCertificate | None = None
    decomposition: KalmanDecomposition | None = None
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


class _Report:
    def __init__(self, theorem: int):
        self.theorem = theorem
        self.checks: list[Check] = []

    def add(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    def require(self, name: str, passed: bool, detail: str = ""):
        if not self.add(name, passed, detail):
            self.fail()

    def fail(self):
        raise SynthesisError(self.theorem, self.checks)


def _inertia_ok(P: np.ndarray, req: str) -> bool:
    n = P.shape[0]
    if req == "pd":
        return inertia_symmetric(P).as_tuple() == (n, 0, 0)
    return is_pseudo_positive_definite(P)


def _solve_required(rep: _Report, cond: str, label: str, prob: AreProblem, req: str) -> RiccatiSolution:
    try:
        sol = solve_stabilizing(prob)
    except RiccatiError as exc:
        rep.require(cond, False, f"{label}: no stabilizing solution ({exc})")
    ok = _inertia_ok(sol.P, req)
    rep.require(cond, ok, f"{label} stabilizing, inertia {sol.inertia}, required {_INERTIA_NAMES[req]}")
    return sol


def _coupling(rep: _Report, cond: str, X: np.ndarray, Y: np.ndarray) -> float:
    rho = spectral_radius(X @ Y)
    rep.require(cond, rho < 1.0, f"rho(XY) = {rho:.6g}")
    return rho


def _assumptions_12(rep: _Report, plant: Plant, need_output: bool, params: SynthesisParams | None = None):
    if params is None:
        E1 = plant.D12.T @ plant.D12
        E2 = plant.D21 @ plant.D21.T
        labels = ("D12'D12", "D21 D21'")
    else:
        E1, E2 = _ebar(plant, params)
        labels = ("E1bar", "E2bar")
    rep.require("Assumption 1", *_pd_args(E1, labels[0]))
    if need_output:
        if plant.p == 0:
            rep.require("Assumption 2", False, "plant has no measured output (C2, D21 missing)")
        rep.require("Assumption 2", *_pd_args(E2, labels[1]))


def _pd_args(M, label):
    c = _check_pd(M, label, "")
    return c.passed, c.detail


def _verify_sbr(rep: _Report, cl: ClosedLoop, grid: SweepGrid | None):
    sys = cl.lti()
    gain = check_gain_condition(sys, grid)
    cert = check_theorem1(sys)
    rep.require("closed-loop pseudo strict bounded real", gain.holds,
                f"pseudo-Hurwitz={gain.pseudo_hurwitz}, peak gain {gain.peak_gain:.6g} at w={gain.peak_omega:.4g}")
    rep.add("closed-loop Riccati certificate", cert.certified, cert.status)
    return gain, cert


# -- theorems 3-5 -----------------------------------------------------------------------


def state_feedback_pseudo_hinf(plant: Plant, grid: SweepGrid | None = None) -> SynthesisResult:
    """Static gain making ``A + B2 K`` pseudo-Hurwitz with closed-loop gain below one."""
    rep = _Report(3)
    _assumptions_12(rep, plant, need_output=False)
    prob = are_x_hinf(plant)
    chosen = None
    notes = []
    for branch in (Branch.STABILIZING, Branch.ANTI_STABILIZING):
        try:
            sol = solve_branch(prob, branch)
        except RiccatiError as exc:
            notes.append(f"{branch.value}: {exc}")
            continue
        spec = eigenvalues(sol.closure_matrix)
        if is_pseudo_positive_definite(sol.P) and spec.imaginary_count == 0:
            chosen = sol
            break
        notes.append(f"{branch.value}: inertia {sol.inertia}, axis eigenvalues {spec.imaginary_count}")
    rep.require("P", chosen is not None,
                f"{chosen.kind.value} branch, inertia {chosen.inertia}" if chosen else
                "no pseudo-positive definite solution on searched branches; " + "; ".join(notes))
    ctrl = Controller.static(gain_thm3(plant, chosen.P))
    cl = close_loop(plant, ctrl)
    gain, cert = _verify_sbr(rep, cl, grid)
    return SynthesisResult(3, ctrl, cl, rep.checks, X=chosen, gain=gain, theorem1=cert)


def _two_riccati(rep: _Report, theorem: int, px: AreProblem, py: AreProblem, names=("(i)", "(ii)", "(iii)")):
    req = THEOREM_REQUIREMENTS[theorem]
    X = _solve_required(rep, names[0], "X", px, req["X"])
    Y = _solve_required(rep, names[1], "Y", py, req["Y"])
    rho = _coupling(rep, names[2], X.P, Y.P)
    return X, Y, rho


def _output_feedback_hinf(plant: Plant, theorem: int, grid: SweepGrid | None) -> SynthesisResult:
    rep = _Report(theorem)
    _assumptions_12(rep, plant, need_output=True)
    X, Y, rho = _two_riccati(rep, theorem, are_x_hinf(plant), are_y_hinf(plant))
    build = controller_thm4 if theorem == 4 else controller_thm5
    ctrl = build(plant, X.P, Y.P)
    cl = close_loop(plant, ctrl)
    gain, cert = _verify_sbr(rep, cl, grid)
    return SynthesisResult(theorem, ctrl, cl, rep.checks, X=X, Y=Y, rho_xy=rho, gain=gain, theorem1=cert)


def output_feedback_pseudo_hinf_v1(plant: Plant, grid: SweepGrid | None = None) -> SynthesisResult:
    """Dynamic compensator built from a pseudo-positive definite X and positive definite Y."""
    return _output_feedback_hinf(plant, 4, grid)


def output_feedback_pseudo_hinf_v2(plant: Plant, grid: SweepGrid | None = None) -> SynthesisResult:
    """Dual form: positive definite X, pseudo-positive definite Y."""
    return _output_feedback_hinf(plant, 5, grid)


# -- Lagrange stabilization ---------------------------------------------------------------


def _check_dims(plant: Plant, bank: NonlinearityBank, params: SynthesisParams):
    if bank.m != plant.m or len(params.tau) != plant.m:
        raise ValueError(f"plant has m={plant.m} nonlinearities; bank has {bank.m}, tau has {len(params.tau)}")


def _lagrange_checks(rep: _Report, cl: ClosedLoop, params: SynthesisParams, grid: SweepGrid | None):
    n = cl.n
    spec = eigenvalues(cl.a + params.lam * np.eye(n))
    rep.require("Lemma 2 (i)", is_pseudo_hurwitz(cl.a + params.lam * np.eye(n)),
                f"A_cl + lambda I: {spec.stable_count} stable, {spec.unstable_count} unstable, "
                f"{spec.imaginary_count} on axis")
    verdict = check_lagrange_frequency(cl.lti(), params.lam, params.tau, np.diag(params.m_mu), grid)
    rep.require("Lemma 2 (ii)", verdict.holds,
                f"worst margin {verdict.margin:.6g} at w={verdict.margin_omega:.4g} ({verdict.label})")
    return verdict


def _certify(rep: _Report, cond: str, cl: ClosedLoop, bank: NonlinearityBank, params: SynthesisParams,
             d_bar: np.ndarray, max_den: int, tol: float) -> PendulumCertificate:
    try:
        cert = pendulum_certificate(cl.a, cl.c, bank, params.tau0, d_bar=d_bar, max_den=max_den, tol=tol)
    except (RationalityError, DegenerateOutputError, NotSingleZeroModeError) as exc:
        rep.require(cond, False, str(exc))
    rep.add(cond, True, "nu = [" + ", ".join(str(v) for v in cert.nu) + f"], p_bar = {cert.p_bar}")
    return cert


def lagrange_output_feedback_unobservable(plant: Plant, bank: NonlinearityBank, params: SynthesisParams,
                                          decomposition: KalmanDecomposition | None = None,
                                          grid: SweepGrid | None = None, max_den: int = MAX_DEN,
                                          tol: float = RATIONAL_TOL) -> SynthesisResult:
    """Output feedback Lagrange stabilization for a plant with an unobservable zero mode."""
    params = params.with_bank(bank)
    _check_dims(plant, bank, params)
    rep = _Report(6)
    _assumptions_12(rep, plant, need_output=True, params=params)
    try:
        dec = decomposition or decompose_unobservable(plant)
    except AssumptionError as exc:
        rep.require(exc.assumption, False, str(exc))
    rep.add("Assumption 3", True, f"{dec.l} zero mode(s), cond(T) = {dec.condition:.4g}")
    X, Y, rho = _two_riccati(rep, 6, are_x_lagrange(plant, params), are_y_lagrange(plant, params),
                             ("I", "II", "III"))
    ctrl = controller_thm6(plant, params, X.P, Y.P)
    cl = close_loop(plant, ctrl, bank)
    d_bar = np.concatenate([dec.zero_mode, np.zeros(ctrl.Ac.shape[0])])
    cert = _certify(rep, "Assumption 4", cl, bank, params, d_bar, max_den, tol)
    verdict = _lagrange_checks(rep, cl, params, grid)
    return SynthesisResult(6, ctrl, cl, rep.checks, X=X, Y=Y, rho_xy=rho, params=params, lagrange=verdict,
                           certificate=cert, decomposition=dec)


def _require_single_mode(rep: _Report, dec: KalmanDecomposition, assumption: str):
    rep.require(assumption, dec.l == 1, f"{dec.l} zero mode(s), cond(T) = {dec.condition:.4g}"
                + ("" if dec.l == 1 else "; a single zero mode is required"))


def _thm7_core(plant: Plant, params: SynthesisParams, dec: KalmanDecomposition, rep: _Report):
    X, Y, rho = _two_riccati(rep, 7, are_x_lagrange(plant, params), are_y_lagrange(plant, params),
                             ("I", "II", "III"))
    ctrl = controller_thm7(plant, params, X.P, Y.P)
    Ac, Bc, Cc = ctrl.Ac, ctrl.Bc, ctrl.Cc
    M = np.block([[Ac, Bc @ dec.C2a], [dec.B2a @ Cc, dec.A1]])
    rhs = np.vstack([Bc @ dec.C2b, dec.A2])
    cond = np.linalg.cond(M)
    rep.require("IV", cond < INV_COND_MAX, f"block matrix singular (cond {cond:.3g})" if cond >= INV_COND_MAX
                else f"block matrix cond {cond:.4g}")
    d0 = -linalg.solve(M, rhs).ravel()
    nc = Ac.shape[0]
    x_part = dec.T @ np.concatenate([d0[nc:], [1.0]])
    d_bar = np.concatenate([x_part, d0[:nc]])
    chi = np.hstack([plant.C1, plant.D12 @ Cc]) @ d_bar
    return X, Y, rho, ctrl, d_bar, chi


def lagrange_output_feedback_uncontrollable(plant: Plant, bank: NonlinearityBank, params: SynthesisParams,
                                            decomposition: KalmanDecomposition | None = None,
                                            grid: SweepGrid | None = None, max_den: int = MAX_DEN,
                                            tol: float = RATIONAL_TOL) -> SynthesisResult:
    """Output feedback Lagrange stabilization for a plant with an uncontrollable zero mode."""
    params = params.with_bank(bank)
    _check_dims(plant, bank, params)
    rep = _Report(7)
    _assumptions_12(rep, plant, need_output=True, params=params)
    try:
        dec = decomposition or decompose_uncontrollable(plant)
    except AssumptionError as exc:
        rep.require(exc.assumption, False, str(exc))
    _require_single_mode(rep, dec, "Assumption 5")
    X, Y, rho, ctrl, d_bar, chi = _thm7_core(plant, params, dec, rep)
    cl = close_loop(plant, ctrl, bank)
    cert = _certify(rep, "IV", cl, bank, params, d_bar, max_den, tol)
    verdict = _lagrange_checks(rep, cl, params, grid)
    return SynthesisResult(7, ctrl, cl, rep.checks, X=X, Y=Y, rho_xy=rho, params=params, lagrange=verdict,
                           certificate=cert, decomposition=dec)


def _thm9_core(plant: Plant, params: SynthesisParams, dec: KalmanDecomposition, rep: _Report):
    prob = are_x_lagrange(plant, params)
    X = _solve_required(rep, "I", "X", prob, THEOREM_REQUIREMENTS[9]["X"])
    E1, _ = _ebar(plant, params)
    Mt = params.m_tau
    k = dec.k
    Xb = dec.T.T @ X.P @ dec.T
    C1t = plant.C1 @ dec.T
    G = dec.B2a @ np.linalg.inv(E1)
    M = dec.A1 - G @ plant.D12.T @ Mt @ C1t[:, :k] - G @ dec.B2a.T @ Xb[:k, :k]
    rhs = dec.A2 - G @ plant.D12.T @ Mt @ C1t[:, k:] - G @ dec.B2a.T @ Xb[:k, k:]
    cond = np.linalg.cond(M)
    rep.require("II", cond < INV_COND_MAX, f"kernel block singular (cond {cond:.3g})" if cond >= INV_COND_MAX
                else f"kernel block cond {cond:.4g}")
    d0 = -linalg.solve(M, rhs).ravel()
    d_bar = dec.T @ np.concatenate([d0, [1.0]])
    K = gain_thm9(plant, params, X.P)
    chi = ((np.eye(plant.m) - plant.D12 @ _solve(E1, plant.D12.T @ Mt)) @ plant.C1
           - plant.D12 @ _solve(E1, plant.B2.T @ X.P)) @ d_bar
    return X, K, d_bar, chi


def lagrange_state_feedback(plant: Plant, bank: NonlinearityBank, params: SynthesisParams,
                            decomposition: KalmanDecomposition | None = None, grid: SweepGrid | None = None,
                            max_den: int = MAX_DEN, tol: float = RATIONAL_TOL) -> SynthesisResult:
    """State feedback Lagrange stabilization for a plant with an uncontrollable zero mode."""
    params = params.with_bank(bank)
    _check_dims(plant, bank, params)
    rep = _Report(9)
    _assumptions_12(rep, plant, need_output=False, params=params)
    try:
        dec = decomposition or decompose_uncontrollable(plant)
    except AssumptionError as exc:
        rep.require(exc.assumption, False, str(exc))
    _require_single_mode(rep, dec, "Assumption 5")
    X, K, d_bar, chi = _thm9_core(plant, params, dec, rep)
    ctrl = Controller.static(K)
    cl = close_loop(plant, ctrl, bank)
    cert = _certify(rep, "II", cl, bank, params, d_bar, max_den, tol)
    verdict = _lagrange_checks(rep, cl, params, grid)
    return SynthesisResult(9, ctrl, cl, rep.checks, X=X, params=params, lagrange=verdict, certificate=cert,
                           decomposition=dec, extras={"chi": chi})


# -- tau scaling and the rationality search --------------------------------------------------


def tau_scaling_normalize(X, Y, tau, gamma: float):
    """Map a solution set at ``tau`` to the one at ``gamma * tau``: ``(gamma X, Y / gamma, gamma tau)``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    X = None if X is None else gamma * np.asarray(X, dtype=float)
    Y = None if Y is None else np.asarray(Y, dtype=float) / gamma
    return X, Y, tuple(gamma * float(t) for t in tau)


@dataclass(frozen=True)
class RationalitySearchResult:
    params: SynthesisParams
    tau_tilde: np.ndarray
    nu: tuple[Fraction, ...]
    p_bar: int
    steps: int
    distance: float
    jacobian: np.ndarray
    jacobian_det_scaled: float


def newton_to_rational(f: Callable[[np.ndarray], np.ndarray], x0, eps: float, h: np.ndarray | None = None,
                       max_den: int = MAX_DEN, max_iter: int = 30, cond_max: float = 1e10):
    """Damped Newton steps driving ``f(x)`` to a nearby rational vector within ``||x - x0|| <= eps``.

    ``f`` maps R^k -> R^k and may raise ``ValueError``/``ArithmeticError``
    outside its domain. Returns ``(x, target, steps, J)``.
    """
    x0 = np.asarray(x0, dtype=float)
    k = x0.size
    h = np.maximum(1e-5 * np.maximum(np.abs(x0), 0.1), 1e-12) if h is None else np.asarray(h, dtype=float)

    def jac(x):
        J = np.empty((k, k))
        for j in range(k):
            e = np.zeros(k)
            e[j] = h[j]
            J[:, j] = (f(x + e) - f(x - e)) / (2 * h[j])
        return J

    f0 = np.asarray(f(x0), dtype=float)
    if f0.size != k:
        raise ValueError(f"f returns {f0.size} values for {k} unknowns")
    J = jac(x0)
    c = np.linalg.cond(J)
    if not np.isfinite(c) or c > cond_max:
        raise RationalitySearchError(f"Jacobian hypothesis fails: det J is numerically zero (cond {c:.3g})")
    # smallest common denominator whose rounded target is within half the radius (linear prediction)
    lu = linalg.lu_factor(J)
    dens = list(range(1, min(max_den, 4096) + 1))
    dens += [2**j for j in range(13, 64) if 4096 < 2**j <= max_den]
    target = None
    for q in dens:
        cand = np.round(f0 * q) / q
        if np.all(cand != 0) and np.linalg.norm(linalg.lu_solve(lu, cand - f0)) <= 0.5 * eps:
            target = cand
            break
    if target is None:
        raise RationalitySearchError("no rational target reachable within the search radius")
    x, fx = x0.copy(), f0
    scale = max(1.0, float(np.max(np.abs(target))))
    for it in range(max_iter + 1):
        r = fx - target
        if np.max(np.abs(r)) <= 1e-13 * scale:
            return x, target, it, J
        if it == max_iter:
            break
        dx = -linalg.solve(J, r)
        t = 1.0
        for _ in range(12):
            xn = x + t * dx
            if np.linalg.norm(xn - x0) <= eps:
                try:
                    fn = np.asarray(f(xn), dtype=float)
                except (ValueError, ArithmeticError, SynthesisError):
                    fn = None
                if fn is not None and np.max(np.abs(fn - target)) < np.max(np.abs(r)):
                    x, fx = xn, fn
                    break
            t *= 0.5
        else:
            raise RationalitySearchError("search failed: Newton step left the feasible set")
        if it % 5 == 4:
            J = jac(x)
    raise RationalitySearchError("search failed: no convergence")


def _tau_from_tilde(tail: np.ndarray) -> tuple[float, ...]:
    s = float(np.sum(tail**2))
    if np.any(tail <= 0) or s >= 1.0:
        raise ValueError("tau outside the unit simplex-sphere")
    return tuple(tail.tolist()) + (math.sqrt(1.0 - s),)


def rationality_search(plant: Plant, bank: NonlinearityBank, params: SynthesisParams, eps: float = 0.05,
                       theorem: int = 7, max_den: int = MAX_DEN,
                       decomposition: KalmanDecomposition | None = None) -> RationalitySearchResult:
    """Perturb ``(tau0, tau_1..tau_{m-1})`` so that ``nu = tau0 Delta^-1 chi`` becomes rational.

    ``tau`` is first normalized to unit length (``tau_m`` is then a function
    of the other entries). Conditions I-III are re-checked at every step.
    """
    if theorem not in (7, 9):
        raise ValueError("the rationality search applies to theorems 7 and 9")
    params = params.with_bank(bank).normalized()
    _check_dims(plant, bank, params)
    dec = decomposition or decompose_uncontrollable(plant)
    if dec.l != 1:
        raise AssumptionError("Assumption 5", f"{dec.l} zero modes; a single one is required")
    core = _thm7_core if theorem == 7 else _thm9_core

    def f(x):
        p = replace(params, tau0=float(x[0]), tau=_tau_from_tilde(x[1:]))
        out = core(plant, p, dec, _Report(theorem))
        chi = out[-1]
        return p.tau0 * chi / bank.periods

    x0 = np.array([params.tau0, *params.tau[:-1]])
    try:
        f0 = f(x0)
    except SynthesisError as exc:
        raise RationalitySearchError(f"conditions fail at the starting point: {exc}") from exc
    try:
        nu = rationalize(f0, max_den)
        x, steps, J = x0, 0, None
    except RationalityError:
        h = 1e-5 * np.maximum(np.abs(x0), 0.1)
        x, _, steps, J = newton_to_rational(f, x0, eps, h=h, max_den=max_den)
        nu = rationalize(f(x), max_den)
    if J is None:
        h = 1e-5 * np.maximum(np.abs(x0), 0.1)
        J = np.column_stack([(f(x0 + h[j] * np.eye(len(x0))[j]) - f(x0 - h[j] * np.eye(len(x0))[j])) / (2 * h[j])
                             for j in range(len(x0))])
    adjusted = replace(params, tau0=float(x[0]), tau=_tau_from_tilde(x[1:]))
    det_scaled = float(np.linalg.det(np.diag(bank.periods) @ J))
    return RationalitySearchResult(adjusted, x, tuple(nu), lcmd(nu), steps, float(np.linalg.norm(x - x0)), J,
                                   det_scaled)


# -- dispatch and grid search ----------------------------------------------------------------------

_LAGRANGE = {6: lagrange_output_feedback_unobservable, 7: lagrange_output_feedback_uncontrollable,
             9: lagrange_state_feedback}


def synthesize(theorem: int, plant: Plant, bank: NonlinearityBank | None = None,
               params: SynthesisParams | None = None, grid: SweepGrid | None = None) -> SynthesisResult:
    if theorem == 3:
        return state_feedback_pseudo_hinf(plant, grid)
    if theorem == 4:
        return output_feedback_pseudo_hinf_v1(plant, grid)
    if theorem == 5:
        return output_feedback_pseudo_hinf_v2(plant, grid)
    if theorem in _LAGRANGE:
        if bank is None or params is None:
            raise ValueError(f"theorem {theorem} needs a nonlinearity bank and (lambda, tau, tau0)")
        return _LAGRANGE[theorem](plant, bank, params, grid=grid)
    raise ValueError(f"unsupported theorem {theorem}; choose one of 3, 4, 5, 6, 7, 9")


def _tau_grid(m: int, levels) -> list[tuple[float, ...]]:
    seen, out = set(), []
    for combo in np.array(np.meshgrid(*[levels] * m, indexing="ij")).reshape(m, -1).T:
        v = combo / np.linalg.norm(combo)
        key = tuple(np.round(v, 12))
        if key not in seen:
            seen.add(key)
            out.append(tuple(v.tolist()))
    return out


def grid_search(plant: Plant, bank: NonlinearityBank, theorem: int, tau0: float = 1.0,
                lambdas=(0.1, 0.2, 0.5, 1.0), tau_levels=(1.0, 2.0, 3.0), eps: float = 0.05,
                grid: SweepGrid | None = None) -> SynthesisResult:
    """First success in lexicographic ``(lambda, tau)`` order over a coarse grid.

    For theorems 7 and 9 a rationality failure with conditions I-III intact
    triggers :func:`rationality_search` around that grid point.
    """
    if theorem not in _LAGRANGE:
        raise ValueError("grid search applies to theorems 6, 7 and 9")
    last: SynthesisError | None = None
    tried = 0
    for lam in lambdas:
        for tau in _tau_grid(plant.m, tau_levels):
            params = SynthesisParams(lam, tau, tau0)
            tried += 1
            try:
                res = _LAGRANGE[theorem](plant, bank, params, grid=grid)
                res.extras["grid_point"] = {"lambda": lam, "tau": list(tau), "tried": tried}
                return res
            except SynthesisError as exc:
                last = exc
                if theorem in (7, 9) and exc.condition in ("IV", "II") and _passed_core(exc):
                    try:
                        found = rationality_search(plant, bank, params, eps, theorem)
                        res = _LAGRANGE[theorem](plant, bank, found.params, grid=grid)
                    except (RationalitySearchError, SynthesisError):
                        continue
                    res.extras["grid_point"] = {"lambda": lam, "tau": list(tau), "tried": tried}
                    res.extras["rationality_search"] = found
                    return res
    raise last or SynthesisError(theorem, [Check("grid", False, "empty grid")])


def _passed_core(exc: SynthesisError) -> bool:
    names = {c.name for c in exc.checks if c.passed}
    need = {"I", "II", "III"} if exc.theorem == 7 else {"I"}
    return need <= names
