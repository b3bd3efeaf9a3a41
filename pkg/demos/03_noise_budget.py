"""Which noise source costs how much per-qubit fidelity?

Runs the stochastic-loading plaquette experiment with the full default
noise model, then with one mechanism switched off at a time, and fits
contrast(n) = c0 * f**n each time. Takes about a minute.

    python3 demos/03_noise_budget.py
"""

import dataclasses
import math

import numpy as np

from rydstab import analysis
from rydstab.noise import Experiment, NoiseModel, run_monte_carlo
from rydstab.pulses import build_readout_sequence
from rydstab.system import plaquette_side_for, square_plaquette

V_DA = 1.1
SHOTS = 2000
PHASES = np.linspace(0, 2 * np.pi, 12, endpoint=False)

VARIANTS = {
    "default": {},
    "no T2*": {"t2_star_ancilla": math.inf, "t2_star_data": math.inf},
    "no Rabi damping": {"rabi_tau_ancilla": math.inf, "rabi_tau_data": math.inf},
    "no V fluctuation": {"v_fluctuation_fraction": 0.0},
    "no SPAM": {"spam": 0.0},
}


def per_qubit(noise):
    exp = Experiment(square_plaquette(plaquette_side_for(V_DA)), build_readout_sequence("compensated", v=V_DA),
                     PHASES, noise, load_probability=0.5)
    res = run_monte_carlo(exp, SHOTS, seed=0)
    ns, cs, es = [], [], []
    for n in range(5):
        fit = analysis.fit_table(res.fringe_table(n_loaded=n))
        ns.append(n)
        cs.append(fit.contrast)
        es.append(fit.xi_fit["contrast"])
    return analysis.contrast_decay_fit(ns, cs, es), cs


def main():
    print(f"{'variant':18s} {'f':>6s} {'+-':>6s}   contrast n=0..4")
    for name, change in VARIANTS.items():
        decay, cs = per_qubit(dataclasses.replace(NoiseModel(), **change))
        print(f"{name:18s} {decay.fidelity:6.3f} {decay.fidelity_err:6.3f}   " + " ".join(f"{c:.2f}" for c in cs))


if __name__ == "__main__":
    main()
