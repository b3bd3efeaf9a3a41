"""Noise models and the Monte Carlo shot harness.

Noise enters in three ways:

* quasi-static: per-shot frozen detuning offsets (T2*), interaction scale
  factors and an optional Rabi-frequency gradient;
* open-system: |r><r| dephasing calibrated to a measured Rabi damping time;
* classical: state-preparation errors, background loss and blast misses.

Data atoms in |0> are never driven, so the Hamiltonian is block diagonal in
the pattern of |0> atoms. Each shot therefore projects its data atoms onto a
Z configuration, drops the |0> spectators and simulates only the ancilla plus
the |1> data atoms as two-level systems. For measurements in the level basis
this is exact, and it keeps plaquette simulations at dimension <= 32.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import curve_fit

from . import qcore
from .dynamics import (SCHEMES, CollapseChannel, Dissipator, MeasurementRecord, NumericalError,
                       default_postselect, rydberg_dephasing, segment_hamiltonian)
from .pulses import PulseSequence, laser_phase
from .system import AtomSite, AtomSystem, HamiltonianTerms
from .tables import FringeTable, fmt

INF = math.inf
CALIBRATION_OMEGA = 1.3   # MHz
BATCH = 2048

# per-site uniform columns in a ShotDraw
U_LOAD, U_SPAM, U_PROJECT, U_SCATTER, U_IMAGE, U_BLAST, U_GATE = range(7)
N_UNIFORMS = 7


@dataclass(frozen=True)
class NoiseModel:
    """Per-species noise parameters. Times in us; ``inf`` disables a mechanism."""

    t2_star_ancilla: float = 3.4
    t2_star_data: float = 3.4
    rabi_tau_ancilla: float = 12.0
    rabi_tau_data: float = 22.0
    scattering_loss_ancilla: float = 0.025
    scattering_loss_data: float = 0.0
    imaging_loss_ancilla: float = 0.109
    imaging_loss_data: float = 0.026
    gate_infidelity_data_2pi: float = 0.049
    gate_error_model: str = "lindblad"      # or "classical"
    v_fluctuation_fraction: float = 0.20
    v_distribution: str = "uniform"         # or "gaussian"
    spam: float = 0.05
    blast_infidelity: float = 0.0
    beam_gradient: float = 0.0              # fractional Rabi change per um along x
    calibration_omega: float = CALIBRATION_OMEGA

    def __post_init__(self):
        for name in ("t2_star_ancilla", "t2_star_data", "rabi_tau_ancilla", "rabi_tau_data",
                     "calibration_omega"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("scattering_loss_ancilla", "scattering_loss_data", "imaging_loss_ancilla",
                     "imaging_loss_data", "gate_infidelity_data_2pi", "spam", "blast_infidelity"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability in [0, 1]")
        if self.v_fluctuation_fraction < 0:
            raise ValueError("v_fluctuation_fraction must be non-negative")
        if self.v_distribution not in ("uniform", "gaussian"):
            raise ValueError("v_distribution must be 'uniform' or 'gaussian'")
        if self.gate_error_model not in ("lindblad", "classical"):
            raise ValueError("gate_error_model must be 'lindblad' or 'classical'")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(t2_star_ancilla=INF, t2_star_data=INF, rabi_tau_ancilla=INF,
                   rabi_tau_data=INF, scattering_loss_ancilla=0.0, imaging_loss_ancilla=0.0,
                   imaging_loss_data=0.0, gate_infidelity_data_2pi=0.0,
                   v_fluctuation_fraction=0.0, spam=0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown noise parameters {sorted(unknown)}")
        return cls(**{k: (INF if v in ("inf", None) else v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def t2_star(self, role: str) -> float:
        return self.t2_star_ancilla if role == "ancilla" else self.t2_star_data

    def rabi_tau(self, role: str) -> float:
        if role == "data" and self.gate_error_model == "classical":
            return INF
        return self.rabi_tau_ancilla if role == "ancilla" else self.rabi_tau_data

    @property
    def has_dephasing(self) -> bool:
        return math.isfinite(self.rabi_tau("ancilla")) or math.isfinite(self.rabi_tau("data"))


def t2star_to_sigma(t2_star: float) -> float:
    """Gaussian detuning spread (MHz) whose ensemble Ramsey decay is exp(-(t/T2*)^2)."""
    if not t2_star > 0:
        raise ValueError("t2_star must be positive")
    return 1.0 / (math.sqrt(2) * math.pi * t2_star)


# --- Rabi damping calibration ---------------------------------------------

def _rabi_superoperator(rate: float, omega: float) -> np.ndarray:
    """Liouvillian of a resonantly driven two-level atom with |r> dephasing (column-stacked vec)."""
    h = np.pi * omega * np.array([[0, 1], [1, 0]], dtype=complex)
    eye = np.eye(2)
    L = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    # dephasing by sqrt(rate)|r><r| damps both coherences at rate/2
    L += np.diag([0, -rate / 2, -rate / 2, 0]).astype(complex)
    return L


def rabi_trace(rate: float, omega: float, times) -> np.ndarray:
    """Rydberg population of a resonantly driven atom starting in its ground level."""
    times = np.asarray(times, dtype=float)
    dt = np.diff(times, prepend=0.0)
    if not np.allclose(dt[1:], dt[1]):
        raise ValueError("times must be evenly spaced")
    L = _rabi_superoperator(rate, omega)
    step = expm(L * dt[1])
    rho = expm(L * times[0]) @ np.array([1, 0, 0, 0], dtype=complex)
    out = np.empty(times.size)
    for k in range(times.size):
        out[k] = rho[3].real
        rho = step @ rho
    return out


def fit_rabi_envelope(times, p_r, omega: float, tau_guess: float) -> float:
    """Fit p_r(t) = c - A exp(-t/tau) cos(2 pi f t + phi) and return tau."""
    def model(t, c, a, tau, f, phi):
        return c - a * np.exp(-t / tau) * np.cos(2 * np.pi * f * t + phi)

    p0 = (0.5, 0.5, tau_guess, omega, 0.0)
    popt, _ = curve_fit(model, times, p_r, p0=p0, maxfev=20000)
    return float(abs(popt[2]))


def _envelope_times(target_tau: float, omega: float) -> np.ndarray:
    t_max = 2 * target_tau
    n = int(math.ceil(t_max * omega * 20)) + 1
    return np.linspace(0.0, t_max, n)


def simulated_tau(rate: float, omega: float, window_tau: float) -> float:
    times = _envelope_times(window_tau, omega)
    return fit_rabi_envelope(times, rabi_trace(rate, omega, times), omega, window_tau)


@functools.lru_cache(maxsize=64)
def calibrate_dephasing_rate(target_tau: float, omega: float = CALIBRATION_OMEGA,
                             bracket: tuple[float, float] | None = None,
                             rtol: float = 1e-3) -> float:
    """|r> dephasing rate (1/us) whose simulated Rabi envelope decays with ``target_tau``.

    Bisects in log(rate) on the fitted envelope time; the initial bracket is a
    factor 4 either side of the weak-damping estimate 4/target_tau.
    """
    if not target_tau > 0 or not omega > 0:
        raise ValueError("target_tau and omega must be positive")
    if math.isinf(target_tau):
        return 0.0
    guess = 4.0 / target_tau
    lo, hi = bracket if bracket is not None else (guess / 4, guess * 4)
    tau_lo = simulated_tau(lo, omega, target_tau)
    tau_hi = simulated_tau(hi, omega, target_tau)
    if not tau_hi < target_tau < tau_lo:
        raise ValueError(
            f"rate interval [{lo:.4g}, {hi:.4g}] /us gives tau in [{tau_hi:.4g}, {tau_lo:.4g}] us, "
            f"which does not bracket {target_tau} us"
        )
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        tau = simulated_tau(mid, omega, target_tau)
        if abs(tau - target_tau) < rtol * target_tau:
            return mid
        if tau > target_tau:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def lindblad_channels(noise: NoiseModel, system: AtomSystem) -> list[CollapseChannel]:
    rates = {}
    for role in ("ancilla", "data"):
        tau = noise.rabi_tau(role)
        rates[role] = calibrate_dephasing_rate(tau, noise.calibration_omega) if math.isfinite(tau) else 0.0
    return rydberg_dephasing(system, rates)


# --- per-shot draws ---------------------------------------------------------

@dataclass(frozen=True)
class ShotDraw:
    """Frozen noise of one shot, indexed by roster site and roster pair."""

    detuning: np.ndarray   # MHz, (n_sites,)
    v_scale: np.ndarray    # (n_pairs,) in itertools.combinations order
    uniforms: np.ndarray   # (n_sites, N_UNIFORMS) coin flips
    measurement: float     # uniform for sampling the projective outcome


def draw_shot(noise: NoiseModel, system: AtomSystem, seed: int, shot_index: int) -> ShotDraw:
    """Noise draws as a pure function of (seed, shot_index), with a fixed layout per roster."""
    n = len(system.sites)
    n_pairs = n * (n - 1) // 2
    rng = np.random.default_rng([seed, shot_index])
    z_site = rng.standard_normal(n)
    u_pair = rng.random(n_pairs)
    z_pair = rng.standard_normal(n_pairs)
    uniforms = rng.random((n, N_UNIFORMS))
    meas = rng.random()
    sigma = np.array([0.0 if math.isinf(noise.t2_star(s.role)) else t2star_to_sigma(noise.t2_star(s.role))
                      for s in system.sites])
    f = noise.v_fluctuation_fraction
    if noise.v_distribution == "uniform":
        v_scale = 1.0 + f * (2 * u_pair - 1)
    else:
        v_scale = np.clip(1.0 + f * z_pair, 0.0, None)
    return ShotDraw(sigma * z_site, v_scale, uniforms, float(meas))


# --- experiment harness -----------------------------------------------------

@dataclass
class Experiment:
    """A Ramsey experiment on a roster of sites.

    ``load_probability`` (if set) loads each data site independently per
    shot; otherwise the roster ``loaded`` flags are used. ``mode`` selects
    unitary evolution or Lindblad evolution with the calibrated dephasing
    channels; by default Lindblad is used whenever the noise model has a
    finite Rabi damping time.
    """

    system: AtomSystem
    sequence: PulseSequence
    phases: np.ndarray
    noise: NoiseModel = field(default_factory=NoiseModel)
    scheme: str = "rydberg_loss"
    postselect: bool | None = None
    load_probability: float | None = None
    mode: str | None = None

    def __post_init__(self):
        self.phases = np.atleast_1d(np.asarray(self.phases, dtype=float))
        if self.phases.size == 0:
            raise ValueError("phase grid is empty")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.postselect is None:
            self.postselect = default_postselect(self.scheme)
        if self.mode is None:
            self.mode = "lindblad" if self.noise.has_dephasing else "unitary"
        if self.mode not in ("unitary", "lindblad"):
            raise ValueError("Monte Carlo mode must be 'unitary' or 'lindblad'")
        if self.load_probability is not None and not 0 <= self.load_probability <= 1:
            raise ValueError("load_probability must be in [0, 1]")
        sites = self.system.sites
        if sites[0].role != "ancilla" or not sites[0].loaded:
            raise ValueError("Monte Carlo experiments need a loaded ancilla at roster site 0")


@dataclass
class MonteCarloResult:
    """Per-shot outcome arrays; shot ``k`` used phase ``phases[k // shots]``."""

    experiment: Experiment
    shots: int
    seed: int
    phase_index: np.ndarray     # (N,)
    loaded: np.ndarray          # (N, n_sites) bool
    levels: np.ndarray          # (N, n_sites) projected level, -1 if unloaded
    survival: np.ndarray        # (N, n_sites) bool
    accepted: np.ndarray        # (N,) bool
    n_loaded: np.ndarray        # (N,) data atoms loaded
    n1: np.ndarray              # (N,)

    @property
    def ancilla_survived(self) -> np.ndarray:
        return self.survival[:, 0]

    @property
    def records(self) -> list[MeasurementRecord]:
        out = []
        for k in range(self.phase_index.size):
            m = self.loaded[k]
            out.append(MeasurementRecord(
                survival=tuple(bool(x) for x in self.survival[k, m]),
                ancilla_survived=bool(self.survival[k, 0]),
                n_loaded=int(self.n_loaded[k]), n0=int(self.n_loaded[k] - self.n1[k]),
                n1=int(self.n1[k]), levels=tuple(int(x) for x in self.levels[k, m]),
                accepted=bool(self.accepted[k]),
            ))
        return out

    def mask(self, n_loaded: int | None = None, n1: int | None = None) -> np.ndarray:
        m = self.accepted.copy()
        if n_loaded is not None:
            m &= self.n_loaded == n_loaded
        if n1 is not None:
            m &= self.n1 == n1
        return m

    def fringe_table(self, n_loaded: int | None = None, n1: int | None = None,
                     label: str = "") -> FringeTable:
        """Ancilla survival counts per phase over accepted shots matching the filters."""
        m = self.mask(n_loaded, n1)
        n_ph = self.experiment.phases.size
        shots = np.bincount(self.phase_index[m], minlength=n_ph)
        succ = np.bincount(self.phase_index[m], weights=self.ancilla_survived[m], minlength=n_ph)
        table = FringeTable.from_counts(self.experiment.phases, succ.astype(int), shots,
                                        label or self.experiment.sequence.label)
        noise = self.experiment.noise
        keep = (1 - noise.scattering_loss_ancilla) * (1 - noise.imaging_loss_ancilla)
        if keep > 0:
            table.extra["background_divided"] = np.clip(table.probs / keep, 0, 1)
        return table

    def to_csv(self, path=None) -> str:
        n = self.loaded.shape[1]
        header = ["shot_index", "phase_rad"] + [f"survived_{i}" for i in range(n)] + \
                 ["accepted", "n_loaded", "n1"]
        lines = [",".join(header)]
        phases = self.experiment.phases
        for k in range(self.phase_index.size):
            row = [str(k), fmt(phases[self.phase_index[k]])]
            row += [str(int(self.survival[k, i])) if self.loaded[k, i] else "" for i in range(n)]
            row += [str(int(self.accepted[k])), str(int(self.n_loaded[k])), str(int(self.n1[k]))]
            lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _reduced_system(system: AtomSystem, members: tuple[int, ...], initials: tuple[str, ...]) -> AtomSystem:
    """Ancilla plus the listed data sites as two-level {|1>, |r>} atoms."""
    sites = [system.sites[0]]
    for i, ini in zip(members, initials):
        s = system.sites[i]
        sites.append(AtomSite("data", s.position, True, ini, n_levels=2))
    roster = (0,) + members
    overrides = {}
    for (i, j), v in system.overrides.items():
        if i in roster and j in roster:
            overrides[(roster.index(i), roster.index(j))] = v
    return replace(system, sites=tuple(sites), overrides=overrides)


def _pair_index(n: int) -> dict:
    import itertools

    return {p: k for k, p in enumerate(itertools.combinations(range(n), 2))}


class _Engine:
    """Batched evolution of one reduced system."""

    def __init__(self, system: AtomSystem, sequence: PulseSequence, channels):
        self.system = system
        self.sequence = sequence
        self.terms = HamiltonianTerms(system)
        self.psi0 = qcore.QuantumState.product(system.space, system.initial_vectors()).data
        self.hadamard = None
        if channels:
            diss = Dissipator(channels, system.space)
            if diss.general:
                raise NotImplementedError("batched Lindblad supports diagonal channels only")
            self.hadamard = diss.hadamard.real if diss.has_hadamard else None

    def probabilities(self, offsets, v_scale, omega_scale, phases) -> np.ndarray:
        batch = phases.shape[0]
        last = len(self.sequence) - 1
        density = self.hadamard is not None
        psi = np.broadcast_to(self.psi0, (batch, self.psi0.size)).copy()
        rho = np.einsum("bi,bj->bij", psi, psi.conj()) if density else None
        for k, seg in enumerate(self.sequence):
            phase = laser_phase(phases) if k == last else None
            H = segment_hamiltonian(self.terms, seg, offsets, v_scale, omega_scale,
                                    phase if phase is None else np.asarray(phase))
            H = np.broadcast_to(H, (batch,) + H.shape[-2:])
            if not density or seg.kind == "instant" or seg.duration == 0:
                U = qcore.propagator(H, seg.duration)
                if density:
                    rho = U @ rho @ np.swapaxes(U.conj(), -1, -2)
                else:
                    psi = np.einsum("bij,bj->bi", U, psi)
                continue
            rho = self._strang(rho, H, seg, offsets)
        p = np.abs(psi) ** 2 if not density else np.einsum("bii->bi", rho).real
        total = p.sum(axis=1)
        if np.any(np.abs(total - 1) > 1e-6):
            raise NumericalError(f"probabilities sum to {total.min():.9f}..{total.max():.9f}")
        return np.clip(p, 0, None) / total[:, None]

    def _strang(self, rho, H, seg, offsets):
        f_max = max(seg.omega, abs(seg.delta), float(np.max(self.terms.v, initial=0.0)))
        if offsets is not None:
            f_max = max(f_max, float(np.max(np.abs(offsets), initial=0.0)))
        dt = seg.duration / 20
        if f_max > 0:
            dt = min(dt, 1.0 / (20 * f_max))
        n = max(1, int(math.ceil(seg.duration / dt - 1e-12)))
        h = seg.duration / n
        U = qcore.propagator(H, h)
        Ud = np.swapaxes(U.conj(), -1, -2)
        half = np.exp(self.hadamard * h / 2)
        for _ in range(n):
            rho = half * (U @ (half * rho) @ Ud)
        return rho


def strang_lindblad(system: AtomSystem, sequence: PulseSequence, channels,
                    ramsey_phase: float) -> np.ndarray:
    """Level probabilities after ``sequence`` using the split-step engine (one shot, no noise)."""
    eng = _Engine(system, sequence, list(channels))
    if eng.hadamard is None:
        eng.hadamard = np.zeros((system.space.dim,) * 2)
    return eng.probabilities(None, None, None, np.array([ramsey_phase]))[0]


def run_monte_carlo(experiment: Experiment, shots: int, seed: int = 0) -> MonteCarloResult:
    """Sample ``shots`` per phase with frozen per-shot noise; deterministic in ``seed``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    exp = experiment
    system, noise = exp.system, exp.noise
    sites = system.sites
    n_sites = len(sites)
    n_ph = exp.phases.size
    total = n_ph * shots
    draws = [draw_shot(noise, system, seed, k) for k in range(total)]
    detuning = np.array([d.detuning for d in draws])
    v_scale = np.array([d.v_scale for d in draws]).reshape(total, -1)
    uni = np.array([d.uniforms for d in draws])
    meas_u = np.array([d.measurement for d in draws])
    phase_index = np.repeat(np.arange(n_ph), shots)

    is_data = np.array([s.role == "data" for s in sites])
    loaded = np.broadcast_to(np.array([s.loaded for s in sites]), (total, n_sites)).copy()
    if exp.load_probability is not None:
        loaded[:, is_data] = uni[:, is_data, U_LOAD] < exp.load_probability
    # projected Z configuration of data atoms: 0 spectator, 1 coupled, 2 Rydberg
    init_level = np.zeros((total, n_sites), dtype=int)
    for i, s in enumerate(sites):
        if s.role != "data":
            continue
        if s.initial == "1":
            init_level[:, i] = np.where(uni[:, i, U_SPAM] < noise.spam, 0, 1)
        elif s.initial == "+":
            init_level[:, i] = np.where(uni[:, i, U_PROJECT] < 0.5, 0, 1)
        elif s.initial == "r":
            init_level[:, i] = 2
    active = loaded & is_data & (init_level > 0)

    pair_of = _pair_index(n_sites)
    x = np.array([s.position[0] for s in sites])
    levels = np.full((total, n_sites), -1, dtype=int)
    channels_cache: dict = {}
    keys = [tuple(np.nonzero(active[k])[0]) + tuple(init_level[k, active[k]]) for k in range(total)]
    groups: dict = {}
    for k, key in enumerate(keys):
        groups.setdefault(key, []).append(k)
    for key, idx in sorted(groups.items()):
        m = len(key) // 2
        members, lv = key[:m], key[m:]
        initials = tuple("1" if l == 1 else "r" for l in lv)
        red = _reduced_system(system, members, initials)
        roster = (0,) + members
        red_pairs = [pair_of[(roster[a], roster[b])] for a, b in red.pairs()]
        chans = []
        if exp.mode == "lindblad":
            ck = len(members)
            if ck not in channels_cache:
                channels_cache[ck] = lindblad_channels(noise, red)
            chans = channels_cache[ck]
        eng = _Engine(red, exp.sequence, chans)
        gradient = 1.0 + noise.beam_gradient * x[list(roster)]
        omega_scale = gradient if noise.beam_gradient else None
        idx = np.array(idx)
        for start in range(0, idx.size, BATCH):
            b = idx[start:start + BATCH]
            offs = detuning[b][:, list(roster)]
            vs = v_scale[b][:, red_pairs] if red_pairs else None
            p = eng.probabilities(offs, vs, omega_scale, exp.phases[phase_index[b]])
            cum = np.cumsum(p, axis=1)
            out = np.minimum((cum < meas_u[b, None] * cum[:, -1:]).sum(axis=1), p.shape[1] - 1)
            red_levels = np.array(np.unravel_index(out, red.space.dims)).T
            levels[b, 0] = red_levels[:, 0]
            for a, site in enumerate(members, start=1):
                levels[b, site] = red_levels[:, a] + 1
    spectator = loaded & is_data & ~active
    levels[spectator] = 0

    survival = _survival(levels, loaded, sites, exp.scheme, noise, uni, active)
    data_loaded = loaded & is_data
    n_loaded = data_loaded.sum(axis=1)
    if exp.scheme in ("blast_1", "both"):
        n0 = (survival & data_loaded).sum(axis=1)
    else:
        n0 = ((levels == 0) & data_loaded).sum(axis=1)
    accepted = np.ones(total, dtype=bool)
    if exp.postselect:
        accepted = np.all(survival | ~data_loaded, axis=1)
    return MonteCarloResult(exp, shots, seed, phase_index, loaded, levels, survival, accepted,
                            n_loaded, n_loaded - n0)


def _survival(levels, loaded, sites, scheme, noise: NoiseModel, uni, active) -> np.ndarray:
    """Atom survival after anti-trapping, blast and background loss maps."""
    ryd = np.array([1 if s.role == "ancilla" else 2 for s in sites])
    is_data = np.array([s.role == "data" for s in sites])
    alive = loaded & (levels != ryd)
    if scheme in ("blast_1", "both"):
        blasted = is_data & (levels == 1) & (uni[..., U_BLAST] >= noise.blast_infidelity)
        alive &= ~blasted
    scat = np.where(is_data, noise.scattering_loss_data, noise.scattering_loss_ancilla)
    img = np.where(is_data, noise.imaging_loss_data, noise.imaging_loss_ancilla)
    alive &= uni[..., U_SCATTER] >= scat
    alive &= uni[..., U_IMAGE] >= img
    if noise.gate_error_model == "classical":
        alive &= ~(active & (uni[..., U_GATE] < noise.gate_infidelity_data_2pi))
    return alive


def parity_accuracy(probs_even: Sequence[float], probs_odd: Sequence[float],
                    even_survives: bool = True) -> float:
    """Exact assignment accuracy from per-configuration survival probabilities (equal priors)."""
    pe, po = np.asarray(probs_even), np.asarray(probs_odd)
    if even_survives:
        return float((pe.sum() + (1 - po).sum()) / (pe.size + po.size))
    return float(((1 - pe).sum() + po.sum()) / (pe.size + po.size))
