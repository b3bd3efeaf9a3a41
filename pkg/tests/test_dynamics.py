import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import curve_fit

from conftest import PHASES, circ_dist, sim_delta_phi
from rydstab import analysis, qcore
from rydstab.dynamics import (
    CollapseChannel, NumericalError, evolve_lindblad, evolve_unitary, initial_state, measure,
    ramsey_scan, rydberg_dephasing, survival_probability,
)
from rydstab.noise import calibrate_dephasing_rate
from rydstab.pulses import PulseSegment, PulseSequence, build_readout_sequence, rabi_sequence
from rydstab.repro import noiseless_operating_point
from rydstab.system import AtomSite, AtomSystem, plaquette_side_for, square_plaquette, two_atom_pair

V_DA = 1.1
SIDE = plaquette_side_for(V_DA)


def truth_table_fidelity(ratio, omega=1.0):
    """Worst overlap with the two blockade truth-table targets (ancilla index first)."""
    seq = build_readout_sequence("resonant", omega_data=omega, ramsey_phase=0.0)
    worst = 1.0
    for init, target in (("0", (1, 0)), ("1", (0, 1))):
        s = two_atom_pair(v=ratio * omega, data_initial=init)
        out = evolve_unitary(initial_state(s), seq, s).final
        worst = min(worst, out.probabilities()[target[0] * 3 + target[1]])
    return worst


def test_blockade_truth_table():
    assert truth_table_fidelity(1e3) > 0.999


def test_truth_table_fidelity_monotone_in_blockade_ratio():
    f = [truth_table_fidelity(r) for r in (10, 1e2, 1e3, 1e4)]
    assert all(b > a for a, b in zip(f, f[1:]))
    assert 1 - f[-1] < 1e-7


def test_decoupled_data_gives_no_phase_shift():
    assert abs(sim_delta_phi("resonant", v=0.0)) < 1e-9


def test_compensated_pair_gives_pi():
    assert circ_dist(sim_delta_phi("compensated", v=V_DA), math.pi) < 1e-6


@given(st.floats(0.1, 5), st.floats(0, 2 * np.pi), st.sampled_from(["resonant", "compensated"]))
def test_unitary_norm_conserved(v, phi, gate):
    s = square_plaquette(SIDE, loaded=(True, True, False, True))
    seq = build_readout_sequence(gate, v=v, omega_data=0.918, ramsey_phase=phi)
    out = evolve_unitary(initial_state(s), seq, s).final
    assert abs(np.linalg.norm(out.data) - 1) < 1e-9


def test_lindblad_without_channels_matches_unitary():
    s = two_atom_pair(v=V_DA, data_initial="+")
    seq = build_readout_sequence("compensated", v=V_DA, ramsey_phase=0.7)
    pure = evolve_unitary(initial_state(s), seq, s).final
    mixed = evolve_lindblad(initial_state(s, density=True), seq, s).final
    assert 1 - qcore.fidelity(pure, mixed) < 1e-7


def test_lindblad_trace_preserved_with_dephasing():
    s = two_atom_pair(v=V_DA, data_initial="+")
    chans = rydberg_dephasing(s, {"ancilla": 0.3, "data": 0.2})
    seq = build_readout_sequence("compensated", v=V_DA)
    res = evolve_lindblad(initial_state(s, density=True), seq, s, chans, record=True)
    for st_ in res.trace:
        assert abs(np.trace(st_.data).real - 1) < 1e-7
        assert np.linalg.eigvalsh(st_.data).min() > -1e-7


def test_lindblad_rejects_oversized_step():
    s = AtomSystem((AtomSite("ancilla", (0, 0)),))
    chans = rydberg_dephasing(s, {"ancilla": 5.0})
    with pytest.raises(NumericalError, match="max_step"):
        evolve_lindblad(initial_state(s, density=True), rabi_sequence(5.0, 3.0), s, chans, max_step=1.0)


def test_calibrated_dephasing_reproduces_rabi_envelope():
    tau, omega = 12.0, 1.3
    s = AtomSystem((AtomSite("ancilla", (0, 0)),))
    chans = rydberg_dephasing(s, {"ancilla": calibrate_dephasing_rate(tau, omega)})
    dt = 1 / (16 * omega)
    seq = PulseSequence(tuple(PulseSegment("ancilla", omega, 0.0, 0.0, dt) for _ in range(int(2 * tau / dt))))
    res = evolve_lindblad(initial_state(s, density=True), seq, s, chans, record=True)
    t = dt * np.arange(len(res.trace))
    pr = np.array([st_.data[1, 1].real for st_ in res.trace])

    def model(t, a, tau_, f, c):
        return c - a * np.exp(-t / tau_) * np.cos(2 * np.pi * f * t)

    popt, _ = curve_fit(model, t, pr, p0=(0.5, 10.0, omega, 0.5))
    assert popt[1] == pytest.approx(tau, rel=0.05)


def test_strong_dephasing_freezes_rabi_transfer():
    s = AtomSystem((AtomSite("ancilla", (0, 0)),))
    seq = rabi_sequence(0.5, 1.0)  # a pi pulse without dephasing
    transfer = []
    for rate in (0.0, 50.0, 500.0):
        out = evolve_lindblad(initial_state(s, density=True), seq, s,
                              rydberg_dephasing(s, {"ancilla": rate})).final
        transfer.append(out.data[1, 1].real)
    assert transfer[0] == pytest.approx(1.0, abs=1e-6)
    assert transfer[0] > transfer[1] > transfer[2]
    assert transfer[2] < 0.05


def test_measure_rydberg_ancilla_is_lost():
    s = AtomSystem((AtomSite("ancilla", (0, 0), initial="r"),))
    rng = np.random.default_rng(1)
    assert not any(measure(initial_state(s), s, rng=rng).ancilla_survived for _ in range(200))


def test_measure_plus_data_under_blast():
    s = two_atom_pair(v=V_DA, data_initial="+")
    rng = np.random.default_rng(2)
    recs = [measure(initial_state(s), s, scheme="blast_1", rng=rng) for _ in range(4000)]
    frac = np.mean([r.survival[1] for r in recs])
    assert abs(frac - 0.5) < 4 * math.sqrt(0.25 / 4000)
    assert all(r.n0 + r.n1 == r.n_loaded for r in recs)


def test_measure_is_seed_deterministic():
    s = two_atom_pair(v=V_DA, data_initial="+")
    a = [measure(initial_state(s), s, "blast_1", rng=np.random.default_rng([5, k])) for k in range(20)]
    b = [measure(initial_state(s), s, "blast_1", rng=np.random.default_rng([5, k])) for k in range(20)]
    assert a == b


def test_parity_from_ancilla_matches_n1_parity():
    op = noiseless_operating_point(V_DA)
    s = square_plaquette(SIDE, initial="+")
    seq = build_readout_sequence("compensated", v=V_DA, ramsey_phase=op.phase)
    out = evolve_unitary(initial_state(s), seq, s).final
    rng = np.random.default_rng(3)
    agree = 0
    shots = 3000
    for _ in range(shots):
        rec = measure(out, s, scheme="blast_1", rng=rng)
        even = analysis.parity(rec.n1) == 1
        agree += rec.ancilla_survived == (even == op.even_survives)
    assert agree / shots > 0.99


def test_ramsey_without_data_is_ideal_cosine():
    s = AtomSystem((AtomSite("ancilla", (0, 0)),))
    seq = build_readout_sequence("resonant", omega_data=0.918)
    tab = ramsey_scan(s, seq, PHASES)
    fit = analysis.fit_table(tab)
    assert fit.contrast == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(tab.probs, np.cos((PHASES - fit.phase) / 2) ** 2, atol=1e-9)


def test_resonant_shift_inside_measured_band():
    d = sim_delta_phi("resonant", v=1.1, omega_data=0.918) / math.pi
    assert 0.54 - 0.08 <= d <= 0.54 + 0.08


def plaquette_phase(loaded, initial="1", include_dd=True, n_loops=1):
    s = square_plaquette(SIDE, loaded=loaded, initial=initial, include_data_data=include_dd)
    seq = build_readout_sequence("compensated", v=V_DA, n=n_loops)
    return analysis.fit_table(ramsey_scan(s, seq, PHASES)).phase


def test_plaquette_phases_split_by_parity():
    ref = plaquette_phase((False,) * 4)
    for n in range(5):
        loaded = tuple(k < n for k in range(4))
        shift = plaquette_phase(loaded) - ref
        target = 0.0 if n % 2 == 0 else math.pi
        assert circ_dist(shift, target) < 0.1, n


PATTERNS = [p for p in itertools.product((False, True), repeat=4)]


@pytest.mark.parametrize("pattern", PATTERNS[::3])
@pytest.mark.parametrize("gate", ["resonant", "compensated"])
def test_loaded_zero_equals_unloaded(pattern, gate):
    # loaded data atoms in |1>, the rest either unloaded or loaded in |0>
    seq = build_readout_sequence(gate, v=V_DA, omega_data=0.918)
    a = square_plaquette(SIDE, loaded=pattern)
    b = square_plaquette(SIDE, loaded=(True,) * 4, initial=["1" if p else "0" for p in pattern])
    pa = ramsey_scan(a, seq, PHASES).probs
    pb = ramsey_scan(b, seq, PHASES).probs
    assert np.max(np.abs(pa - pb)) < 1e-9


def test_permutation_symmetry_without_data_interactions():
    by_n = {}
    for pattern in PATTERNS:
        s = square_plaquette(SIDE, loaded=pattern, include_data_data=False)
        probs = ramsey_scan(s, build_readout_sequence("compensated", v=V_DA), PHASES).probs
        by_n.setdefault(sum(pattern), []).append(probs)
    for group in by_n.values():
        assert np.max(np.ptp(np.array(group), axis=0)) < 1e-9


@pytest.mark.parametrize("n", [0, 1, 2])
def test_phase_depends_only_on_parity_without_data_interactions(n):
    lo = plaquette_phase(tuple(k < n for k in range(4)), include_dd=False)
    hi = plaquette_phase(tuple(k < n + 2 for k in range(4)), include_dd=False)
    assert circ_dist(lo, hi) < 1e-3


def test_survival_probability_postselection():
    s = two_atom_pair(v=V_DA, data_initial="r")
    st_ = initial_state(s)
    assert math.isnan(survival_probability(st_, s, "rydberg_loss", postselect=True))
    assert survival_probability(st_, s, "rydberg_loss", postselect=False) == 1.0
