"""Pulse sequences and analytic design of the interaction-compensated gate.

Frequencies are in MHz and durations in us, so a resonant pulse of Rabi
frequency Omega rotates by 2*pi*Omega*t; a 2*pi pulse lasts 1/Omega.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .system import DriveSettings, SpeciesDrive

SEGMENT_KINDS = ("drive", "idle", "instant")
DEFAULT_ANCILLA_OMEGA = 5.0  # MHz


def wrap_phase(x):
    """Map angles into the window (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class PulseSegment:
    """Square pulse on one species' global beam.

    ``kind="idle"`` is free evolution (no drive); ``kind="instant"`` is an
    ideal rotation with pulse area ``omega * duration`` that takes no time and
    ignores interactions and detuning.
    """

    target: str
    omega: float
    delta: float
    phase: float
    duration: float
    kind: str = "drive"

    def __post_init__(self):
        if self.target not in ("ancilla", "data"):
            raise ValueError(f"unknown target species {self.target!r}")
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"segment kind must be one of {SEGMENT_KINDS}")
        if self.duration < 0:
            raise ValueError("segment duration must be non-negative")
        if self.omega < 0:
            raise ValueError("segment Rabi frequency must be non-negative")
        if self.kind == "idle" and self.omega != 0:
            raise ValueError("idle segments have zero Rabi frequency")

    @property
    def elapsed(self) -> float:
        """Wall-clock duration in us (zero for instantaneous rotations)."""
        return 0.0 if self.kind == "instant" else self.duration

    def drive(self) -> DriveSettings:
        sd = SpeciesDrive(self.omega, self.delta, self.phase, active=True)
        if self.target == "ancilla":
            return DriveSettings(ancilla=sd)
        return DriveSettings(data=sd)


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[PulseSegment, ...]
    label: str = ""
    design_v: float | None = None
    design_n: int | None = None

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a pulse sequence needs at least one segment")
        object.__setattr__(self, "segments", segs)

    @property
    def total_duration(self) -> float:
        return sum(s.elapsed for s in self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)

    def with_ramsey_phase(self, ramsey_phase: float) -> "PulseSequence":
        """Copy with the final segment set to Ramsey phase ``ramsey_phase``."""
        segs = list(self.segments)
        segs[-1] = replace(segs[-1], phase=laser_phase(ramsey_phase))
        return replace(self, segments=tuple(segs))

    def to_text(self) -> str:
        """One segment per line: target, omega, delta, phase, duration, kind."""
        lines = [f"# label: {self.label}"]
        if self.design_v is not None:
            lines.append(f"# design_v: {self.design_v!r}")
        if self.design_n is not None:
            lines.append(f"# design_n: {self.design_n}")
        lines.append("# target omega_mhz delta_mhz phase_rad duration_us kind")
        for s in self.segments:
            lines.append(f"{s.target} {s.omega!r} {s.delta!r} {s.phase!r} {s.duration!r} {s.kind}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PulseSequence":
        meta: dict = {}
        segs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].partition(":")
                if sep and key.strip() in ("label", "design_v", "design_n"):
                    meta[key.strip()] = val.strip()
                continue
            parts = line.split()
            if len(parts) not in (5, 6):
                raise ValueError(f"line {lineno}: expected 5 or 6 fields, got {len(parts)}")
            target, *nums = parts[:5]
            kind = parts[5] if len(parts) == 6 else "drive"
            omega, delta, phase, duration = (float(x) for x in nums)
            segs.append(PulseSegment(target, omega, delta, phase, duration, kind))
        return cls(
            tuple(segs),
            label=meta.get("label", ""),
            design_v=float(meta["design_v"]) if "design_v" in meta else None,
            design_n=int(meta["design_n"]) if "design_n" in meta else None,
        )


@dataclass(frozen=True)
class CompensationSolution:
    delta: float      # MHz
    omega: float      # MHz
    duration: float   # us
    n: int
    design_v: float   # MHz


def aa_phase(delta: float, omega: float) -> float:
    """Geometric phase of one closed Bloch-sphere loop at detuning ``delta``.

    Returns -pi * (1 + delta / sqrt(omega^2 + delta^2)), in (-2pi, 0).
    """
    if delta == 0 and omega == 0:
        raise ValueError("aa_phase undefined for zero drive and zero detuning")
    return -math.pi * (1.0 + delta / math.hypot(omega, delta))


def solve_compensation(v: float, n: int = 1) -> CompensationSolution:
    """Detuning and Rabi frequency closing both branches with a pi phase difference.

    The non-interacting branch makes one loop while the interacting branch
    (detuning shifted by ``v``) makes ``n`` loops in the same time.
    """
    if v <= 0:
        raise ValueError(f"interaction must be positive, got {v}")
    if int(n) != n or n < 1:
        raise ValueError(f"loop count must be a positive integer, got {n}")
    n = int(n)
    delta = v / (2 * n * n)
    omega = delta * math.sqrt(4 * n * n - 1)
    return CompensationSolution(delta, omega, 1.0 / math.hypot(omega, delta), n, v)


def verify_closure(delta: float, omega: float, v: float, n: int) -> float:
    """Residual of the closed-loop condition, in MHz."""
    return math.hypot(omega, delta - v) - n * math.hypot(omega, delta)


def predicted_delta_phi(delta: float, omega: float, v: float, n: int, tol: float = 1e-9) -> float:
    """Differential geometric phase between the two ancilla branches, in (-pi, pi]."""
    residual = verify_closure(delta, omega, v, n)
    if abs(residual) > tol:
        raise ValueError(f"trajectory is not closed: residual {residual:.3e} MHz exceeds {tol:.1e}")
    if v == 0:
        return 0.0
    return wrap_phase(n * aa_phase(delta - v, omega) - aa_phase(delta, omega))


def first_order_phase_error(omega: float, v: float) -> float:
    """Ancilla phase pi - omega/v left by a resonant gate under strong blockade.

    Only meaningful for omega << v.
    """
    if v <= 0:
        raise ValueError(f"interaction must be positive, got {v}")
    return math.pi - omega / v


def laser_phase(ramsey_phase: float) -> float:
    """Beam phase of the closing pi/2 pulse for a given Ramsey phase.

    With the Hamiltonian's sign conventions the beam phase equals the Ramsey
    phase, and a data-induced branch phase arg(a_g conj(a_r)) then appears as
    a fringe shift of the same sign. Kept as a function so every caller
    shares one convention.
    """
    return float(ramsey_phase) if np.ndim(ramsey_phase) == 0 else np.asarray(ramsey_phase, dtype=float)


def ancilla_pi_half(phase: float, ancilla_omega: float, instantaneous: bool = False) -> PulseSegment:
    kind = "instant" if instantaneous else "drive"
    return PulseSegment("ancilla", ancilla_omega, 0.0, phase, 1.0 / (4 * ancilla_omega), kind)


def build_readout_sequence(gate: str = "compensated", v: float | None = None, n: int = 1,
                           omega_data: float | None = None, ramsey_phase: float = 0.0,
                           ancilla_omega: float = DEFAULT_ANCILLA_OMEGA,
                           instantaneous: bool = False) -> PulseSequence:
    """Ancilla pi/2, data closure pulse, ancilla pi/2 at the Ramsey phase.

    ``gate="resonant"`` needs ``omega_data`` and drives for 1/omega_data at
    zero detuning. ``gate="compensated"`` solves for the pulse from ``v`` and
    ``n``.
    """
    if ancilla_omega <= 0:
        raise ValueError("ancilla Rabi frequency must be positive")
    if gate == "resonant":
        if omega_data is None or omega_data <= 0:
            raise ValueError("resonant gate needs a positive omega_data")
        data = PulseSegment("data", omega_data, 0.0, 0.0, 1.0 / omega_data)
    elif gate == "compensated":
        if v is None or v <= 0:
            raise ValueError("compensated gate needs a positive design interaction v")
        sol = solve_compensation(v, n)
        data = PulseSegment("data", sol.omega, sol.delta, 0.0, sol.duration)
    else:
        raise ValueError(f"gate must be 'resonant' or 'compensated', got {gate!r}")
    segs = (
        ancilla_pi_half(0.0, ancilla_omega, instantaneous),
        data,
        ancilla_pi_half(laser_phase(ramsey_phase), ancilla_omega, instantaneous),
    )
    return PulseSequence(segs, label=gate, design_v=v, design_n=n if gate == "compensated" else None)


def ramsey_delay_sequence(delay: float, ramsey_phase: float = 0.0,
                          ancilla_omega: float = DEFAULT_ANCILLA_OMEGA) -> PulseSequence:
    """Ancilla-only Ramsey: pi/2, free evolution for ``delay`` us, pi/2."""
    segs = [ancilla_pi_half(0.0, ancilla_omega)]
    if delay > 0:
        segs.append(PulseSegment("ancilla", 0.0, 0.0, 0.0, delay, "idle"))
    segs.append(ancilla_pi_half(laser_phase(ramsey_phase), ancilla_omega))
    return PulseSequence(tuple(segs), label=f"ramsey-delay-{delay}")


def rabi_sequence(duration: float, omega: float, target: str = "ancilla") -> PulseSequence:
    return PulseSequence((PulseSegment(target, omega, 0.0, 0.0, duration),), label="rabi")


def resonant_delta_phi_curve(vs: Iterable[float], omega: float) -> np.ndarray:
    """Exact branch phase of the resonant gate for a single data atom.

    Uses the 2x2 interacting block only; the free branch picks up exactly -1.
    """
    from scipy.linalg import expm

    out = []
    for v in vs:
        h = np.array([[0.0, omega / 2], [omega / 2, v]])
        a = expm(-2j * np.pi * h / omega)[0, 0]
        out.append(wrap_phase(float(np.angle(-np.conj(a)))))
    return np.array(out)
