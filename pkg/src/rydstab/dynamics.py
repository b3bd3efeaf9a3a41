"""Execution of pulse sequences: unitary and Lindblad evolution, measurement.

Measurement is a single terminal projective measurement in the product level
basis followed by classical loss maps:

* Rydberg atoms are anti-trapped and lost, in every scheme;
* with a blast (``blast_1`` / ``both``) data atoms in |1> are removed too, so
  only data atoms in |0> survive;
* optional background losses (scattering, imaging) from a noise model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qcore
from .pulses import PulseSegment, PulseSequence
from .qcore import LevelSpace, QuantumState
from .system import AtomSystem, HamiltonianTerms
from .tables import FringeTable

SCHEMES = ("rydberg_loss", "blast_1", "both")
TRACE_TOL = 1e-6
POSITIVITY_FLOOR = -1e-7
STEP_FACTOR = 200


class NumericalError(RuntimeError):
    """Integration failed a conservation check."""


@dataclass(frozen=True)
class CollapseChannel:
    """Lindblad operator ``sqrt(rate) * operator`` acting on one site."""

    operator: np.ndarray
    rate: float   # 1/us
    site: int

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("collapse rate must be non-negative")


@dataclass
class EvolutionResult:
    final: QuantumState
    total_duration: float
    trace: list = field(default_factory=list)


@dataclass(frozen=True)
class MeasurementRecord:
    """One experimental shot.

    ``survival`` lists loaded atoms in Hilbert order (ancilla first).
    ``n0``/``n1`` come from survival under a blast; without a blast the atoms
    cannot be told apart and the projected simulation levels are used.
    """

    survival: tuple[bool, ...]
    ancilla_survived: bool
    n_loaded: int
    n0: int
    n1: int
    levels: tuple[int, ...] = ()
    accepted: bool = True

    def __post_init__(self):
        if self.n0 + self.n1 != self.n_loaded:
            raise ValueError("n0 + n1 must equal the number of loaded data atoms")


def initial_state(system: AtomSystem, density: bool = False) -> QuantumState:
    psi = QuantumState.product(system.space, system.initial_vectors())
    if density:
        return QuantumState(psi.space, psi.density_matrix())
    return psi


def rydberg_dephasing(system: AtomSystem, rates: dict) -> list[CollapseChannel]:
    """|r><r| dephasing on every loaded site; ``rates`` maps role to 1/us."""
    chans = []
    for k, s in enumerate(system.active_sites):
        rate = rates.get(s.role, 0.0) or 0.0
        if rate > 0:
            op = np.zeros((s.n_levels, s.n_levels), dtype=complex)
            op[s.rydberg_level, s.rydberg_level] = 1.0
            chans.append(CollapseChannel(op, rate, k))
    return chans


def segment_hamiltonian(terms: HamiltonianTerms, seg: PulseSegment, detuning_offsets=None,
                        v_scale=None, omega_scale=None, phase=None) -> np.ndarray:
    """Hamiltonian (rad/us) of one segment, optionally batched over noise draws.

    ``detuning_offsets`` (MHz, per site) shift every site's detuning;
    ``omega_scale`` multiplies per-site Rabi frequencies; ``phase`` overrides
    the segment phase (e.g. one Ramsey phase per shot).
    """
    mask = terms.roles == seg.target
    omega = np.where(mask, seg.omega, 0.0)
    delta = np.where(mask, seg.delta, 0.0)
    ph = np.full(terms.n_sites, seg.phase) if phase is None else \
        np.asarray(phase, dtype=float)[..., None] * np.ones(terms.n_sites)
    if seg.kind == "instant":
        return terms.assemble(omega, np.zeros_like(delta), ph, np.zeros(len(terms.pair_list)))
    if omega_scale is not None:
        omega = omega * np.asarray(omega_scale, dtype=float)
    if detuning_offsets is not None:
        delta = delta + np.asarray(detuning_offsets, dtype=float)
    return terms.assemble(omega, delta, ph, v_scale)


def _check_pure_input(initial: QuantumState, system: AtomSystem) -> None:
    if initial.space.dims != system.space.dims:
        raise qcore.DimensionError(
            f"state dims {initial.space.dims} do not match system dims {system.space.dims}"
        )


def evolve_unitary(initial: QuantumState, sequence: PulseSequence, system: AtomSystem,
                   record: bool = False, detuning_offsets=None, v_scale=None,
                   omega_scale=None) -> EvolutionResult:
    """Propagate a pure state through every segment of ``sequence``."""
    if not initial.is_pure:
        raise TypeError("evolve_unitary needs a pure state; use evolve_lindblad for density matrices")
    _check_pure_input(initial, system)
    terms = HamiltonianTerms(system)
    psi = initial.data.copy()
    trace = [initial] if record else []
    for seg in sequence:
        H = segment_hamiltonian(terms, seg, detuning_offsets, v_scale, omega_scale)
        psi = qcore.propagator(H, seg.duration) @ psi
        norm = np.linalg.norm(psi)
        if abs(norm - 1) > 1e-9:
            raise NumericalError(f"norm drifted to {norm:.12f}")
        psi /= norm
        if record:
            trace.append(QuantumState(initial.space, psi))
    return EvolutionResult(QuantumState(initial.space, psi), sequence.total_duration, trace)


class Dissipator:
    """Lindblad dissipator split into a diagonal (Hadamard) part and general operators."""

    def __init__(self, channels: Sequence[CollapseChannel], space: LevelSpace):
        d = space.dim
        self.hadamard = np.zeros((d, d), dtype=complex)
        self.general = []
        self.max_rate = 0.0
        for ch in channels:
            if ch.rate == 0:
                continue
            self.max_rate = max(self.max_rate, ch.rate)
            full = qcore.embed_single_site(ch.operator, ch.site, space) * math.sqrt(ch.rate)
            if np.count_nonzero(full - np.diag(np.diag(full))) == 0:
                l = np.diag(full)
                a = np.abs(l) ** 2
                self.hadamard += np.outer(l, l.conj()) - 0.5 * (a[:, None] + a[None, :])
            else:
                self.general.append((full, full.conj().T, full.conj().T @ full))
        self.has_hadamard = bool(np.any(self.hadamard))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = self.hadamard * rho if self.has_hadamard else np.zeros_like(rho)
        for L, Ld, LdL in self.general:
            out = out + L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        return out


def lindblad_step(seg: PulseSegment, terms: HamiltonianTerms, max_rate: float = 0.0,
                  offsets=None) -> float:
    """Fixed RK4 step: at most 1/(200 f) and at most a hundredth of the segment.

    ``f`` bounds the spectral radius of H/2pi (drive + detuning + every pair
    interaction) plus the fastest dissipative rate, so the interacting
    branches are resolved as well as the free one.
    """
    f_max = seg.omega + abs(seg.delta) + float(np.sum(terms.v)) + max_rate / (2 * math.pi)
    if offsets is not None:
        f_max += float(np.max(np.abs(offsets), initial=0.0))
    dt = seg.duration / 100
    if f_max > 0:
        dt = min(dt, 1.0 / (STEP_FACTOR * f_max))
    return dt


def _rk4_segment(rho, H, diss: Dissipator, duration: float, dt: float):
    n = max(1, int(math.ceil(duration / dt - 1e-12)))
    h = duration / n

    def rhs(r):
        return -1j * (H @ r - r @ H) + diss(r)

    for _ in range(n):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * h * k1)
        k3 = rhs(rho + 0.5 * h * k2)
        k4 = rhs(rho + h * k3)
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho, h


def _clean_density(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    w, v = np.linalg.eigh(rho)
    if w.min() < 0:
        w = np.clip(w, 0, None)
        rho = (v * w) @ v.conj().T
        rho /= np.trace(rho).real
    return rho


def evolve_lindblad(initial: QuantumState, sequence: PulseSequence, system: AtomSystem,
                    channels: Sequence[CollapseChannel] = (), record: bool = False,
                    max_step: float | None = None, detuning_offsets=None, v_scale=None,
                    omega_scale=None) -> EvolutionResult:
    """Integrate the master equation segment by segment with fixed-step RK4."""
    _check_pure_input(initial, system)
    space = system.space
    for ch in channels:
        if not 0 <= ch.site < space.n_sites:
            raise qcore.DimensionError(f"collapse channel on invalid site {ch.site}")
        if np.asarray(ch.operator).shape != (space.dims[ch.site],) * 2:
            raise qcore.DimensionError(f"collapse operator shape mismatch on site {ch.site}")
    terms = HamiltonianTerms(system)
    diss = Dissipator(channels, space)
    rho = initial.density_matrix()
    trace = [QuantumState(space, rho)] if record else []
    for seg in sequence:
        H = segment_hamiltonian(terms, seg, detuning_offsets, v_scale, omega_scale)
        if seg.kind == "instant":
            U = qcore.propagator(H, seg.duration)
            rho = U @ rho @ U.conj().T
        elif seg.duration > 0:
            dt = max_step if max_step is not None else \
                lindblad_step(seg, terms, diss.max_rate, detuning_offsets)
            rho, h = _rk4_segment(rho, H, diss, seg.duration, dt)
            drift = abs(np.trace(rho).real - 1)
            if drift > TRACE_TOL:
                raise NumericalError(
                    f"trace drifted by {drift:.2e} with step {h:.3e} us; try max_step={h / 4:.3e}"
                )
            wmin = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
            if wmin < POSITIVITY_FLOOR:
                raise NumericalError(
                    f"negative eigenvalue {wmin:.2e} with step {h:.3e} us; try max_step={h / 4:.3e}"
                )
        rho = _clean_density(rho)
        if record:
            trace.append(QuantumState(space, rho))
    return EvolutionResult(QuantumState(space, rho), sequence.total_duration, trace)


def default_postselect(scheme: str) -> bool:
    return scheme == "rydberg_loss"


def _data_survival_mask(levels: np.ndarray, system: AtomSystem, scheme: str) -> np.ndarray:
    """Noise-free survival of each loaded atom given projected levels (..., n_sites)."""
    sites = system.active_sites
    ryd = np.array([s.rydberg_level for s in sites])
    alive = levels != ryd
    if scheme in ("blast_1", "both"):
        for k, s in enumerate(sites):
            if s.role == "data":
                # reduced two-level data sites have no |0> and never survive a blast
                alive[..., k] = (levels[..., k] == 0) if s.n_levels == 3 else False
    return alive


def survival_probability(state: QuantumState, system: AtomSystem, scheme: str = "rydberg_loss",
                         postselect: bool | None = None) -> float:
    """Exact probability that the ancilla survives, optionally given all data survive."""
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if postselect is None:
        postselect = default_postselect(scheme)
    space = state.space
    levels = np.indices(space.dims).reshape(space.n_sites, -1).T
    alive = _data_survival_mask(levels, system, scheme)
    roles = [s.role for s in system.active_sites]
    anc = [k for k, r in enumerate(roles) if r == "ancilla"]
    if not anc:
        raise ValueError("system has no loaded ancilla")
    data = [k for k, r in enumerate(roles) if r == "data"]
    p = state.probabilities()
    anc_ok = alive[:, anc[0]]
    if postselect and data:
        keep = np.all(alive[:, data], axis=1)
        norm = p[keep].sum()
        return float(p[keep & anc_ok].sum() / norm) if norm > 0 else float("nan")
    return float(p[anc_ok].sum())


def apply_losses(alive: np.ndarray, system: AtomSystem, levels: np.ndarray, scheme: str,
                 noise, uniforms: np.ndarray) -> np.ndarray:
    """Classical background loss maps; ``uniforms`` has shape (..., n_sites, 3)."""
    if noise is None:
        return alive
    alive = alive.copy()
    for k, site in enumerate(system.active_sites):
        role = site.role
        scat = noise.scattering_loss_ancilla if role == "ancilla" else noise.scattering_loss_data
        img = noise.imaging_loss_ancilla if role == "ancilla" else noise.imaging_loss_data
        alive[..., k] &= uniforms[..., k, 0] >= scat
        alive[..., k] &= uniforms[..., k, 1] >= img
        if role == "data" and scheme in ("blast_1", "both") and noise.blast_infidelity > 0:
            # a blast that misses leaves a |1> atom trapped
            missed = uniforms[..., k, 2] < noise.blast_infidelity
            alive[..., k] |= missed & (levels[..., k] == site.coupled_level) \
                & (uniforms[..., k, 0] >= scat) & (uniforms[..., k, 1] >= img)
    return alive


def _record(levels, alive, system: AtomSystem, scheme: str, postselect: bool) -> MeasurementRecord:
    sites = system.active_sites
    data = [k for k, s in enumerate(sites) if s.role == "data"]
    anc = [k for k, s in enumerate(sites) if s.role == "ancilla"]
    n_loaded = len(data)
    if scheme in ("blast_1", "both"):
        n0 = int(sum(alive[k] for k in data))
    else:
        n0 = int(sum(levels[k] == 0 and sites[k].n_levels == 3 for k in data))
    accepted = True
    if postselect:
        accepted = all(alive[k] for k in data)
    return MeasurementRecord(
        survival=tuple(bool(a) for a in alive),
        ancilla_survived=bool(alive[anc[0]]) if anc else False,
        n_loaded=n_loaded, n0=n0, n1=n_loaded - n0,
        levels=tuple(int(l) for l in levels), accepted=accepted,
    )


def measure(state: QuantumState, system: AtomSystem, scheme: str = "rydberg_loss",
            postselect: bool | None = None, rng=None, noise=None) -> MeasurementRecord:
    """Sample one projective outcome and map it to atom survival."""
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if postselect is None:
        postselect = default_postselect(scheme)
    rng = np.random.default_rng(rng)
    p = state.probabilities()
    idx = rng.choice(p.size, p=p / p.sum())
    levels = np.array(np.unravel_index(idx, state.space.dims))
    alive = _data_survival_mask(levels, system, scheme)
    alive = apply_losses(alive, system, levels, scheme, noise,
                         rng.random((system.space.n_sites, 3)))
    return _record(levels, alive, system, scheme, postselect)


def _split_at_final(sequence: PulseSequence):
    prefix = PulseSequence(sequence.segments[:-1]) if len(sequence) > 1 else None
    return prefix, sequence.segments[-1]


def ramsey_scan(system: AtomSystem, sequence: PulseSequence, phases, mode: str = "unitary",
                scheme: str = "rydberg_loss", postselect: bool | None = None,
                channels: Sequence[CollapseChannel] | None = None, noise=None,
                shots: int = 1000, seed: int = 0) -> FringeTable:
    """Ancilla survival versus the Ramsey phase of the closing pi/2 pulse.

    ``unitary`` and ``lindblad`` give exact probabilities (no background
    loss). ``monte_carlo`` samples ``shots`` per phase through the noise
    harness. With a noise model attached in the exact modes, the table's
    ``extra["degraded"]`` holds survival after background losses.
    """
    phases = np.asarray(phases, dtype=float)
    if phases.size == 0:
        raise ValueError("phase grid is empty")
    if mode == "monte_carlo":
        from .noise import Experiment, NoiseModel, run_monte_carlo

        exp = Experiment(system, sequence, phases, noise or NoiseModel.noiseless(),
                         scheme=scheme, postselect=postselect)
        return run_monte_carlo(exp, shots, seed).fringe_table()
    if mode not in ("unitary", "lindblad"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "lindblad" and channels is None and noise is not None:
        from .noise import lindblad_channels

        channels = lindblad_channels(noise, system)
    prefix, final = _split_at_final(sequence)
    if mode == "unitary":
        state = initial_state(system)
        if prefix is not None:
            state = evolve_unitary(state, prefix, system).final
    else:
        state = initial_state(system, density=True)
        if prefix is not None:
            state = evolve_lindblad(state, prefix, system, channels or ()).final
    probs = []
    for phi in phases:
        last = PulseSequence((final,)).with_ramsey_phase(phi)
        if mode == "unitary":
            out = evolve_unitary(state, last, system).final
        else:
            out = evolve_lindblad(state, last, system, channels or ()).final
        probs.append(survival_probability(out, system, scheme, postselect))
    table = FringeTable(phases, probs, label=sequence.label)
    if noise is not None:
        keep = (1 - noise.scattering_loss_ancilla) * (1 - noise.imaging_loss_ancilla)
        table.extra["degraded"] = np.asarray(probs) * keep
    return table
