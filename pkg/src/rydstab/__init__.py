"""Simulation and analysis toolkit for dual-species Rydberg stabilizer readout."""

from .analysis import (FringeFit, bootstrap, contrast_decay_fit, correct_contrast, delta_phi,
                       fit_fringe, fit_table, operating_point, parity, parity_summary)
from .dynamics import (CollapseChannel, MeasurementRecord, evolve_lindblad, evolve_unitary,
                       initial_state, measure, ramsey_scan, survival_probability)
from .noise import (Experiment, NoiseModel, calibrate_dephasing_rate, draw_shot, run_monte_carlo,
                    t2star_to_sigma)
from .pulses import (PulseSegment, PulseSequence, aa_phase, build_readout_sequence,
                     predicted_delta_phi, solve_compensation, verify_closure)
from .qcore import LevelSpace, QuantumState
from .system import (AtomSite, AtomSystem, build_hamiltonian, square_plaquette, two_atom_pair,
                     vdw_strength)
from .tables import FringeTable

__version__ = "0.1.0"
