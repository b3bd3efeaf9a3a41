import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

PHASES = np.linspace(0.0, 2 * np.pi, 12, endpoint=False)


@pytest.fixture
def phases():
    return PHASES.copy()


def circ_dist(a, b):
    """Distance between two angles on the circle."""
    return abs(np.angle(np.exp(1j * (a - b))))


def sim_delta_phi(gate="compensated", v=1.1, n=1, omega_data=0.918, data_levels=3,
                  instantaneous=False, phases=PHASES):
    """Noiseless fringe shift of one loaded |1> data atom against an unloaded reference."""
    from rydstab import analysis
    from rydstab.dynamics import ramsey_scan
    from rydstab.pulses import build_readout_sequence
    from rydstab.system import two_atom_pair

    seq = build_readout_sequence(gate, v=v if gate == "compensated" else None, n=n,
                                 omega_data=omega_data, instantaneous=instantaneous)
    probe = two_atom_pair(v=v, data_levels=data_levels)
    ref = two_atom_pair(v=v, data_loaded=False)
    fp = analysis.fit_table(ramsey_scan(probe, seq, phases))
    fr = analysis.fit_table(ramsey_scan(ref, seq, phases))
    return analysis.delta_phi(fr, fp)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
