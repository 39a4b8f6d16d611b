"""Fixed-step simulation of ``x' = A x + B phi(C x)`` and boundedness diagnostics."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .pendulum import PendulumCertificate
from .systems import ClosedLoop

__all__ = [
    "SimConfig",
    "Trajectory",
    "ShiftReport",
    "ScanReport",
    "simulate",
    "simulate_batch",
    "shift_invariance_test",
    "boundedness_scan",
    "step_halving_difference",
    "convergence_order",
    "default_threshold",
]

THREADS_ENV = "PSEUDOHINF_THREADS"


@dataclass(frozen=True)
class SimConfig:
    t_final: float = 200.0
    dt: float = 1e-3
    x0: tuple[float, ...] | None = None
    record_stride: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (np.isfinite(self.t_final) and self.t_final >= self.dt):
            raise ValueError(f"t_final must be at least dt, got {self.t_final}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in np.ravel(self.x0)))

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def with_dt(self, dt: float) -> "SimConfig":
        return SimConfig(self.t_final, dt, self.x0, self.record_stride)


def default_threshold(x0) -> float:
    return 1e3 * (1.0 + float(np.max(np.abs(x0), initial=0.0)))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (records, n)
    sup_norm: float
    diverged: bool
    truncation_time: float | None
    threshold: float

    @property
    def bounded(self) -> bool:
        """Finite-horizon verdict: no divergence and ``sup ||x||_inf`` below the threshold."""
        return (not self.diverged) and self.sup_norm < self.threshold

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _rhs(cl: ClosedLoop, ndim: int):
    a, b, c, bank = cl.a, cl.b, cl.c, cl.bank
    if bank is None:
        return lambda x: a @ x
    phi = bank.evaluator(ndim)
    n = a.shape[0]
    ac = np.vstack([a, c])  # one product yields both A x and z = C x

    def f(x):
        y = ac @ x
        return y[:n] + b @ phi(y[n:])

    return f


def _rk4_single(f, x: np.ndarray, h: float, steps: int, stride: int, rec: np.ndarray):
    """Unbatched loop; returns (last record index, truncation step or 0)."""
    h2, h6 = 0.5 * h, h / 6.0
    isfinite = np.isfinite
    for s in range(1, steps + 1):
        k1 = f(x)
        k2 = f(x + h2 * k1)
        k3 = f(x + h2 * k2)
        k4 = f(x + h * k3)
        xn = x + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not isfinite(xn).all():
            return (s - 1) // stride, s
        x = xn
        if s % stride == 0:
            rec[s // stride] = x
    return steps // stride, 0


def simulate_batch(cl: ClosedLoop, x0s, cfg: SimConfig, threshold: float | None = None) -> list[Trajectory]:
    """Classical RK4 for several initial states at once (columns of ``x0s``)."""
    X = np.array(x0s, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n != cl.n:
        raise ValueError(f"initial state has dimension {n}, closed loop has {cl.n}")
    h, steps, stride = cfg.dt, cfg.steps, int(cfg.record_stride)
    n_rec = steps // stride + 1
    if k == 1:
        rec1 = np.empty((n_rec, n))
        rec1[0] = X[:, 0]
        with np.errstate(over="ignore", invalid="ignore"):
            last, bad = _rk4_single(_rhs(cl, 1), X[:, 0].copy(), h, steps, stride, rec1)
        return [_trajectory(rec1[: last + 1], h * stride, bad * h if bad else None, threshold)]
    f = _rhs(cl, 2)
    rec = np.empty((n_rec, n, k))
    rec[0] = X
    alive = np.ones(k, dtype=bool)
    trunc = np.full(k, np.nan)
    last_rec = np.zeros(k, dtype=int)
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(1, steps + 1):
            k1 = f(X)
            k2 = f(X + 0.5 * h * k1)
            k3 = f(X + 0.5 * h * k2)
            k4 = f(X + h * k3)
            Xn = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            bad = alive & ~np.all(np.isfinite(Xn), axis=0)
            if bad.any():
                trunc[bad] = s * h
                alive &= ~bad
                Xn[:, ~alive] = X[:, ~alive]
            X = Xn
            if s % stride == 0:
                r = s // stride
                rec[r] = X
                last_rec[alive] = r
            if not alive.any():
                break
    return [_trajectory(rec[: (last_rec[j] + 1 if not alive[j] else n_rec), :, j].copy(), h * stride,
                        None if alive[j] else float(trunc[j]), threshold) for j in range(k)]


def _trajectory(states: np.ndarray, dt_rec: float, trunc: float | None, threshold: float | None) -> Trajectory:
    thr = default_threshold(states[0]) if threshold is None else threshold
    diverged = trunc is not None
    sup = float("inf") if diverged else float(np.max(np.abs(states)))
    return Trajectory(np.arange(len(states)) * dt_rec, states, sup, diverged, trunc, thr)


def simulate(cl: ClosedLoop, cfg: SimConfig, x0=None, threshold: float | None = None) -> Trajectory:
    x0 = cfg.x0 if x0 is None else x0
    if x0 is None:
        raise ValueError("no initial state given")
    return simulate_batch(cl, np.asarray(x0, dtype=float), cfg, threshold)[0]


@dataclass(frozen=True)
class ShiftReport:
    max_deviation: float
    deviation: np.ndarray  # per recorded time
    times: np.ndarray
    lattice_vector: np.ndarray


def shift_invariance_test(cl: ClosedLoop, cert: PendulumCertificate | np.ndarray, cfg: SimConfig,
                          x0=None) -> ShiftReport:
    """Max over time of ``||(x_b(t) - x_a(t)) - d||_inf`` for ``x_b(0) = x_a(0) + d``."""
    d = np.asarray(cert.lattice_vector if isinstance(cert, PendulumCertificate) else cert, dtype=float)
    x0 = np.asarray(cfg.x0 if x0 is None else x0, dtype=float)
    if d.shape != x0.shape:
        raise ValueError("lattice vector and initial state differ in dimension")
    ta, tb = simulate_batch(cl, np.column_stack([x0, x0 + d]), cfg)
    if ta.diverged or tb.diverged:
        raise FloatingPointError("trajectory diverged during the shift test")
    dev = np.max(np.abs(tb.states - ta.states - d), axis=1)
    return ShiftReport(float(np.max(dev)), dev, ta.times, d)


@dataclass(frozen=True)
class ScanReport:
    seeds: np.ndarray
    sup_norms: np.ndarray
    bounded: np.ndarray
    threshold: float

    @property
    def all_bounded(self) -> bool:
        return bool(np.all(self.bounded))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def boundedness_scan(cl: ClosedLoop, seeds, cfg: SimConfig, threshold: float = 1e3) -> ScanReport:
    """Simulate every seed (rows of ``seeds``) and compare ``sup ||x||_inf`` with ``threshold``."""
    S = np.atleast_2d(np.asarray(seeds, dtype=float))
    chunks = np.array_split(np.arange(S.shape[0]), min(_threads(), S.shape[0]))
    run = lambda idx: simulate_batch(cl, S[idx].T, cfg, threshold)
    with ThreadPoolExecutor(len(chunks)) as ex:
        trajs = [t for part in ex.map(run, chunks) for t in part]
    sups = np.array([t.sup_norm for t in trajs])
    return ScanReport(S, sups, np.array([t.bounded for t in trajs]), threshold)


def step_halving_difference(cl: ClosedLoop, cfg: SimConfig, x0=None) -> float:
    """``||x_dt(T) - x_{dt/2}(T)||_inf``."""
    x0 = cfg.x0 if x0 is None else x0
    a = simulate(cl, SimConfig(cfg.t_final, cfg.dt, None, cfg.steps), x0)
    b = simulate(cl, SimConfig(cfg.t_final, cfg.dt / 2, None, 2 * cfg.steps), x0)
    return float(np.max(np.abs(a.final_state - b.final_state)))


def convergence_order(cl: ClosedLoop, cfg: SimConfig, x0=None) -> float:
    """Observed order from runs at ``dt``, ``dt/2``, ``dt/4``."""
    x0 = cfg.x0 if x0 is None else x0
    finals = [simulate(cl, SimConfig(cfg.t_final, cfg.dt / s, None, s * cfg.steps), x0).final_state
              for s in (1, 2, 4)]
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    return float(np.log2(e1 / e2))
