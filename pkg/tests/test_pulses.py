import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from conftest import circ_dist, sim_delta_phi
from rydstab.pulses import (
    PulseSegment, PulseSequence, aa_phase, build_readout_sequence, first_order_phase_error,
    predicted_delta_phi, resonant_delta_phi_curve, solve_compensation, verify_closure, wrap_phase,
)


def test_aa_phase_examples():
    assert aa_phase(0.0, 0.7) == pytest.approx(-math.pi)
    assert aa_phase(1.0, 1.0) == pytest.approx(-math.pi * (1 + 1 / math.sqrt(2)))
    assert aa_phase(1.0, 1.0) == pytest.approx(-5.364, abs=1e-3)
    assert aa_phase(-1e9, 1.0) == pytest.approx(0.0, abs=1e-8)
    assert aa_phase(1e9, 1.0) == pytest.approx(-2 * math.pi, abs=1e-8)
    with pytest.raises(ValueError):
        aa_phase(0.0, 0.0)


@given(st.floats(-50, 50), st.floats(0.01, 50))
def test_aa_phase_antisymmetry_and_range(delta, omega):
    assert aa_phase(delta, omega) + aa_phase(-delta, omega) == pytest.approx(-2 * math.pi, abs=1e-12)
    assert -2 * math.pi < aa_phase(delta, omega) < 0


@given(st.floats(-50, 50), st.floats(1e-3, 10), st.floats(0.01, 50))
def test_aa_phase_strictly_decreasing(delta, step, omega):
    assert aa_phase(delta + step, omega) < aa_phase(delta, omega)


def test_aa_phase_matches_closed_loop_simulation():
    # independent oracle: drive one two-level atom for one generalized Rabi period
    omega, delta = 0.8, 0.35
    h = 2 * np.pi * np.array([[0, omega / 2], [omega / 2, -delta]])
    U = expm(-1j * h / math.hypot(omega, delta))
    # closed loop: U is diagonal with |g> phase equal to the geometric phase (up to sign convention)
    assert abs(abs(U[0, 0]) - 1) < 1e-12
    dyn = np.angle(U[0, 0])
    assert circ_dist(-dyn, aa_phase(delta, omega)) < 1e-10


def test_solve_compensation_examples():
    s = solve_compensation(1.1, 1)
    assert s.delta == pytest.approx(0.55)
    assert s.omega == pytest.approx(0.9526, abs=1e-4)
    assert s.duration == pytest.approx(0.9091, abs=1e-4)
    s2 = solve_compensation(1.0, 2)
    assert s2.delta == pytest.approx(0.125)
    assert s2.omega == pytest.approx(0.125 * math.sqrt(15))
    assert s2.omega == pytest.approx(0.4841, abs=1e-4)
    with pytest.raises(ValueError):
        solve_compensation(0.0, 1)
    with pytest.raises(ValueError):
        solve_compensation(1.0, 0)


@pytest.mark.parametrize("v", [0.5, 1.1, 2.3, 4.4])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_solution_family_identity(v, n):
    s = solve_compensation(v, n)
    assert abs(verify_closure(s.delta, s.omega, v, n)) < 1e-12
    assert abs(abs(predicted_delta_phi(s.delta, s.omega, v, n)) - math.pi) < 1e-10
    ratio = math.hypot(s.omega, s.delta - v) / math.hypot(s.omega, s.delta)
    assert ratio == pytest.approx(n, abs=1e-12)
    assert s.duration == pytest.approx(1 / math.hypot(s.omega, s.delta))


@given(st.floats(0.01, 100), st.integers(1, 6))
def test_solution_family_property(v, n):
    s = solve_compensation(v, n)
    assert abs(verify_closure(s.delta, s.omega, v, n)) < 1e-12 * max(1.0, v)
    assert circ_dist(predicted_delta_phi(s.delta, s.omega, v, n, tol=1e-9 * max(1.0, v)), math.pi) < 1e-9


def test_verify_closure_examples():
    assert verify_closure(0.0, 0.918, 1.1, 1) == pytest.approx(math.hypot(0.918, 1.1) - 0.918)
    assert verify_closure(0.0, 0.918, 1.1, 1) == pytest.approx(0.514, abs=1e-3)
    assert verify_closure(0.0, 0.5, 0.0, 1) == 0.0


def test_predicted_delta_phi_examples():
    s = solve_compensation(1.1, 1)
    assert aa_phase(s.delta - 1.1, s.omega) == pytest.approx(-math.pi / 2)
    assert aa_phase(s.delta, s.omega) == pytest.approx(-3 * math.pi / 2)
    assert predicted_delta_phi(0.0, 1.0, 0.0, 1) == 0.0
    with pytest.raises(ValueError, match="residual"):
        predicted_delta_phi(0.0, 0.918, 1.1, 1)


def test_first_order_phase_error_examples():
    assert first_order_phase_error(1.0, 50.0) == pytest.approx(math.pi - 0.02)
    assert first_order_phase_error(0.0, 1.0) == math.pi
    val = first_order_phase_error(0.918, 1.1)
    assert val == pytest.approx(math.pi - 0.8345, abs=1e-4)
    assert val / math.pi == pytest.approx(0.734, abs=1e-3)
    # first-order estimate is far from the exact resonant result at omega ~ v
    assert abs(val - resonant_delta_phi_curve([1.1], 0.918)[0]) > 0.1 * math.pi


def test_readout_sequence_examples():
    seq = build_readout_sequence("resonant", omega_data=0.918)
    assert seq.segments[1].duration == pytest.approx(1 / 0.918)
    assert seq.segments[1].duration == pytest.approx(1.089, abs=1e-3)
    assert seq.segments[0].duration == pytest.approx(1 / 20)
    comp = build_readout_sequence("compensated", v=1.1, n=1)
    d = comp.segments[1]
    assert (d.omega, d.delta, d.duration) == pytest.approx((0.9526, 0.55, 0.9091), abs=1e-4)
    a = build_readout_sequence("compensated", v=1.1, ramsey_phase=0.0)
    b = build_readout_sequence("compensated", v=1.1, ramsey_phase=math.pi)
    assert a.segments[:-1] == b.segments[:-1]
    assert a.segments[-1].phase != b.segments[-1].phase
    with pytest.raises(ValueError):
        build_readout_sequence("compensated", v=0.0)


def test_segment_and_sequence_invariants():
    with pytest.raises(ValueError):
        PulseSegment("ancilla", -1.0, 0, 0, 1)
    with pytest.raises(ValueError):
        PulseSegment("ancilla", 1.0, 0, 0, -1)
    with pytest.raises(ValueError):
        PulseSegment("ancilla", 1.0, 0, 0, 1, kind="idle")
    with pytest.raises(ValueError):
        PulseSequence(())


def test_sequence_text_round_trip():
    seq = build_readout_sequence("compensated", v=1.3, n=2, ramsey_phase=0.4, instantaneous=True)
    back = PulseSequence.from_text(seq.to_text())
    assert back == seq


def test_wrap_phase_window():
    assert wrap_phase(math.pi) == pytest.approx(math.pi)
    assert wrap_phase(-math.pi) == pytest.approx(math.pi)
    assert wrap_phase(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


@pytest.mark.parametrize("v,n", [(0.5, 1), (1.1, 1), (2.3, 2), (4.4, 3), (1.0, 2)])
def test_analytic_matches_simulated_fringe_shift(v, n):
    s = solve_compensation(v, n)
    pred = predicted_delta_phi(s.delta, s.omega, v, n)
    sim = sim_delta_phi("compensated", v=v, n=n)
    assert circ_dist(sim, pred) < 1e-6


def test_resonant_curve_matches_simulation_and_is_monotone():
    vs = np.arange(0.5, 4.51, 0.5)
    oracle = resonant_delta_phi_curve(vs, 0.918)
    sims = np.array([sim_delta_phi("resonant", v=v) for v in vs])
    assert np.max(np.abs(sims - oracle)) < 1e-6
    assert np.all(np.diff(sims) > 0)
    assert sims[-1] < math.pi and sims[-1] > 0.85 * math.pi
