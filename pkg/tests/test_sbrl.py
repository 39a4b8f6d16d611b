import numpy as np
import pytest

from pseudohinf.sbrl import (
    ShiftedPoleError,
    SweepGrid,
    check_gain_condition,
    check_lagrange_frequency,
    check_theorem1,
    frequency_response,
    lagrange_sweep_table,
    minimality_margin,
)
from pseudohinf.systems import LtiSystem


def test_scalar_unstable_pole_certified():
    # G(s) = 0.25 / (s - 1): pseudo-Hurwitz, peak |G(0)| = 0.25
    sys = LtiSystem([[1.0]], [[0.5]], [[0.5]])
    v = check_gain_condition(sys)
    assert v.pseudo_hurwitz and v.holds
    assert v.peak_gain == pytest.approx(0.25, abs=1e-12)
    assert v.peak_omega == 0.0
    cert = check_theorem1(sys)
    assert cert.certified
    # p^2/4 + 2p + 1/4 = 0; the stabilizing root has 1 + p/4 < 0: p = -4 - sqrt(15)
    p = -4 - np.sqrt(15)
    assert cert.P[0, 0] == pytest.approx(p, rel=1e-9)
    assert cert.inertia.as_tuple() == (0, 1, 0)


def test_gain_above_one_not_certified():
    sys = LtiSystem([[1.0]], [[2.0]], [[1.0]])
    v = check_gain_condition(sys)
    assert v.pseudo_hurwitz and not v.holds
    assert v.peak_gain == pytest.approx(2.0)
    assert not check_theorem1(sys).certified


def test_stable_system_is_not_pseudo_hurwitz():
    v = check_gain_condition(LtiSystem([[-1.0]], [[0.1]], [[0.1]]))
    assert not v.pseudo_hurwitz and not v.holds


def test_zero_transfer_function():
    v = check_gain_condition(LtiSystem(np.diag([-1.0, 2.0]), np.zeros((2, 1)), [[1.0, 1.0]]))
    assert v.holds and v.peak_gain == 0.0


def test_refinement_finds_resonance():
    # lightly damped resonance at w = 2 between coarse grid points
    wn, z = 2.0, 0.01
    A = np.array([[0.0, 1.0], [-wn**2, -2 * z * wn]])
    sys = LtiSystem(A, [[0.0], [1.0]], [[wn**2 * 0.004, 0.0]])
    coarse = check_gain_condition(sys, SweepGrid(points=50, refine_passes=0))
    fine = check_gain_condition(sys, SweepGrid(points=50, refine_passes=12))
    exact = 0.004 / (2 * z * np.sqrt(1 - z**2))
    assert fine.peak_gain >= coarse.peak_gain
    assert fine.peak_gain == pytest.approx(exact, rel=1e-3)


def test_sweep_grid_validation():
    with pytest.raises(ValueError):
        SweepGrid(points=1)
    with pytest.raises(ValueError):
        SweepGrid(omega_min=10.0, omega_max=1.0)
    assert SweepGrid(points=3).omegas()[0] == 0.0


def test_shifted_pole_detected():
    sys = LtiSystem([[-0.5]], [[1.0]], [[1.0]])
    with pytest.raises(ShiftedPoleError):
        frequency_response(sys, 0.0, shift=0.5)
    assert frequency_response(sys, 0.0)[0, 0] == pytest.approx(2.0)


def test_lagrange_condition_scalar():
    sys = LtiSystem([[-1.0]], [[1.0]], [[1.0]])
    ok = check_lagrange_frequency(sys, 0.0, [1.0], [0.5])
    assert ok.holds
    # worst at w = 0: |G|^2 - 1/mu^2 = 1 - 4
    assert ok.margin == pytest.approx(-3.0, abs=1e-9)
    bad = check_lagrange_frequency(sys, 0.0, [1.0], [2.0])
    assert not bad.holds and bad.margin == pytest.approx(0.75, abs=1e-9)


def test_lagrange_scaled_gain_consistent():
    # margin < 0 iff sigma_max(M_tau^1/2 G M_mu M_tau^-1/2) < 1
    rng = np.random.default_rng(3)
    for _ in range(20):
        A = rng.standard_normal((3, 3)) - 3 * np.eye(3)
        sys = LtiSystem(A, rng.standard_normal((3, 2)), rng.standard_normal((2, 3)))
        tau, mu = rng.uniform(0.2, 2, 2), rng.uniform(0.2, 2, 2)
        v = check_lagrange_frequency(sys, 0.2, tau, mu)
        assert (v.margin < 0) == (v.peak_weighted_gain < 1)


def test_sweep_table_scalar():
    rows = lagrange_sweep_table(LtiSystem([[-1.0]], [[1.0]], [[1.0]]), 0.0, [1.0], [1.0], SweepGrid(points=20).omegas())
    peaks = [r[1] for r in rows]
    assert rows[0][0] == 0.0 and peaks[0] == pytest.approx(1.0)
    assert max(peaks) == peaks[0]


def test_sweep_table_skips_poles():
    rows = lagrange_sweep_table(LtiSystem([[-0.5]], [[1.0]], [[1.0]]), 0.5, [1.0], [1.0], [0.0, 1.0])
    assert [r[0] for r in rows] == [1.0]


def test_minimality_margin():
    assert minimality_margin(LtiSystem(np.diag([-1.0, -2.0]), [[1.0], [1.0]], [[1.0, 1.0]])) > 0.1
    assert minimality_margin(LtiSystem(np.diag([-1.0, -2.0]), [[1.0], [0.0]], [[1.0, 1.0]])) < 1e-12
