"""Dual-species array model: species constants, geometry, interactions, Hamiltonian.

All user-facing frequencies are ordinary frequencies in MHz. The factor 2*pi
is applied exactly once, in :meth:`HamiltonianTerms.assemble`, which returns
matrices in rad/us.

Per-site level conventions (the drive always couples the top two levels):

========  ======  ==================
role      levels  basis
========  ======  ==================
ancilla   2       |g>, |r>
data      3       |0>, |1>, |r>
data      2       |1>, |r>  (reduced)
========  ======  ==================

Hamiltonian, in MHz (H / 2pi)::

    sum_i (Omega_i/2)(e^{i phi_i}|c_i><r_i| + h.c.) - Delta_i |r_i><r_i|
      + sum_{i<j} V_ij |r_i r_j><r_i r_j|

so an atom next to a Rydberg neighbour sees an effective detuning Delta - V.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .qcore import HermitianOperator, LevelSpace, site_projector_diagonal

ROLES = ("ancilla", "data")

# C6 coefficients in GHz um^6 for Cs 54S and the Na 52S / Cs 54S pair.
C6_DATA_INTRA = 27.96
C6_INTER = 65.7


@dataclass(frozen=True)
class SpeciesParams:
    name: str
    c6_intra: float | None = None  # GHz um^6

    def __post_init__(self):
        if self.c6_intra is not None and self.c6_intra <= 0:
            raise ValueError(f"{self.name}: c6_intra must be positive")


@dataclass(frozen=True)
class InterSpeciesParams:
    c6_inter: float = C6_INTER

    def __post_init__(self):
        if self.c6_inter <= 0:
            raise ValueError("c6_inter must be positive")


SODIUM = SpeciesParams("Na")
CESIUM = SpeciesParams("Cs", C6_DATA_INTRA)

INITIAL_LABELS = {
    "ancilla": ("g", "r", "+"),
    "data": ("0", "1", "r", "+"),
}


@dataclass(frozen=True)
class AtomSite:
    """One tweezer site.

    ``initial`` is a level label: ``g``/``r`` for the ancilla, ``0``/``1``/``r``
    for data atoms, or ``+`` for an equal superposition of the two qubit
    states (|g>+|r> or |0>+|1>).
    """

    role: str
    position: tuple[float, float]
    loaded: bool = True
    initial: str = "1"
    n_levels: int | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        n = self.n_levels
        if n is None:
            n = 2 if self.role == "ancilla" else 3
        if self.role == "ancilla" and n != 2:
            raise ValueError("ancilla sites have exactly 2 levels")
        if self.role == "data" and n not in (2, 3):
            raise ValueError("data sites have 2 or 3 levels")
        object.__setattr__(self, "n_levels", n)
        init = self.initial
        if self.role == "ancilla" and init == "1":
            init = "g"
        if init not in INITIAL_LABELS[self.role]:
            raise ValueError(f"invalid initial level {init!r} for {self.role}")
        if self.role == "data" and n == 2 and init in ("0", "+"):
            raise ValueError("reduced two-level data sites have no |0> level")
        object.__setattr__(self, "initial", init)

    @property
    def rydberg_level(self) -> int:
        return self.n_levels - 1

    @property
    def coupled_level(self) -> int:
        """Ground level driven to |r> (|g> for the ancilla, |1> for data)."""
        return self.n_levels - 2

    def initial_vector(self) -> np.ndarray:
        v = np.zeros(self.n_levels, dtype=complex)
        if self.initial == "+":
            # (|g>+|r>)/sqrt2 for the ancilla, (|0>+|1>)/sqrt2 for data
            v[:2] = 1 / math.sqrt(2)
        elif self.initial == "r":
            v[self.rydberg_level] = 1.0
        elif self.initial in ("g", "1"):
            v[self.coupled_level] = 1.0
        else:  # "0"
            v[0] = 1.0
        return v


def vdw_strength(c6: float, r: float) -> float:
    """Van der Waals shift in MHz for C6 in GHz um^6 and distance in um."""
    if r <= 0:
        raise ValueError(f"distance must be positive, got {r}")
    return 1000.0 * c6 / r**6


def vdw_distance(c6: float, v: float) -> float:
    """Distance in um at which the shift equals ``v`` MHz."""
    if v <= 0:
        raise ValueError(f"interaction must be positive, got {v}")
    return (1000.0 * c6 / v) ** (1.0 / 6.0)


def data_shift(n_nearest: int, n_next_nearest: int, c6: float, side: float) -> float:
    """Resonance shift of a plaquette data atom from excited neighbours, in MHz."""
    if not 0 <= n_nearest <= 2 or not 0 <= n_next_nearest <= 1:
        raise ValueError("n_nearest must be in 0..2 and n_next_nearest in 0..1")
    return n_nearest * vdw_strength(c6, side) + n_next_nearest * vdw_strength(c6, math.sqrt(2) * side)


@dataclass(frozen=True)
class AtomSystem:
    """Roster of sites plus interaction parameters.

    ``overrides`` maps roster index pairs ``(i, j)`` to measured interaction
    strengths in MHz; they replace the C6 law for that pair. Unloaded sites
    are kept in the roster but contribute no Hilbert-space factor.
    """

    sites: tuple[AtomSite, ...]
    ancilla_species: SpeciesParams = SODIUM
    data_species: SpeciesParams = CESIUM
    inter: InterSpeciesParams = field(default_factory=InterSpeciesParams)
    overrides: Mapping[tuple[int, int], float] = field(default_factory=dict)
    include_data_data: bool = True

    def __post_init__(self):
        sites = tuple(self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise ValueError("system needs at least one site")
        n_anc = sum(s.role == "ancilla" for s in sites)
        if n_anc > 1:
            raise ValueError("at most one ancilla per system")
        if n_anc == 1 and sites[0].role != "ancilla":
            raise ValueError("the ancilla must be roster site 0")
        clean = {}
        for (i, j), v in dict(self.overrides).items():
            if i == j or not (0 <= i < len(sites) and 0 <= j < len(sites)):
                raise ValueError(f"invalid override pair ({i}, {j})")
            if v < 0:
                raise ValueError(f"override for ({i}, {j}) must be non-negative")
            clean[(min(i, j), max(i, j))] = float(v)
        object.__setattr__(self, "overrides", clean)
        for a, b in itertools.combinations(range(len(sites)), 2):
            if np.allclose(sites[a].position, sites[b].position, atol=1e-12, rtol=0):
                raise ValueError(f"sites {a} and {b} coincide at {sites[a].position}")

    @property
    def loaded_indices(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.sites) if s.loaded)

    @property
    def active_sites(self) -> tuple[AtomSite, ...]:
        return tuple(self.sites[i] for i in self.loaded_indices)

    @property
    def space(self) -> LevelSpace:
        return LevelSpace(tuple(s.n_levels for s in self.active_sites))

    def hilbert_index(self, roster_index: int) -> int:
        return self.loaded_indices.index(roster_index)

    def sites_with_role(self, role: str) -> tuple[int, ...]:
        """Hilbert-space indices of loaded sites with ``role``."""
        return tuple(k for k, s in enumerate(self.active_sites) if s.role == role)

    def c6_for(self, a: AtomSite, b: AtomSite) -> float:
        if a.role != b.role:
            return self.inter.c6_inter
        species = self.ancilla_species if a.role == "ancilla" else self.data_species
        if species.c6_intra is None:
            raise ValueError(f"no intraspecies C6 configured for {species.name}")
        return species.c6_intra

    def interaction_table(self) -> np.ndarray:
        """Symmetric pair interactions in MHz over loaded sites (Hilbert order)."""
        idx = self.loaded_indices
        n = len(idx)
        table = np.zeros((n, n))
        for a, b in itertools.combinations(range(n), 2):
            i, j = idx[a], idx[b]
            si, sj = self.sites[i], self.sites[j]
            if (i, j) in self.overrides:
                v = self.overrides[(i, j)]
            elif si.role == sj.role == "data" and not self.include_data_data:
                v = 0.0
            else:
                r = math.dist(si.position, sj.position)
                v = vdw_strength(self.c6_for(si, sj), r)
            table[a, b] = table[b, a] = v
        return table

    def pairs(self) -> list[tuple[int, int]]:
        n = len(self.loaded_indices)
        return list(itertools.combinations(range(n), 2))

    def initial_vectors(self) -> list[np.ndarray]:
        return [s.initial_vector() for s in self.active_sites]

    def with_sites(self, sites: Sequence[AtomSite]) -> "AtomSystem":
        return replace(self, sites=tuple(sites))


@dataclass(frozen=True)
class SpeciesDrive:
    omega: float = 0.0   # MHz
    delta: float = 0.0   # MHz
    phase: float = 0.0   # rad
    active: bool = True

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"Rabi frequency must be non-negative, got {self.omega}")


@dataclass(frozen=True)
class DriveSettings:
    """Global beam settings per species role."""

    ancilla: SpeciesDrive = field(default_factory=lambda: SpeciesDrive(active=False))
    data: SpeciesDrive = field(default_factory=lambda: SpeciesDrive(active=False))

    def for_role(self, role: str) -> SpeciesDrive:
        return self.ancilla if role == "ancilla" else self.data


class HamiltonianTerms:
    """Pre-built operator pieces of the array Hamiltonian.

    :meth:`assemble` accepts per-site drive parameters and per-pair
    interaction scale factors, each optionally with a leading batch axis, so
    Monte Carlo shots with different frozen noise can be built at once.
    """

    def __init__(self, system: AtomSystem):
        self.system = system
        self.space = space = system.space
        sites = system.active_sites
        self.n_sites = len(sites)
        self.roles = np.array([s.role for s in sites])
        d = space.dim
        self.drive_x = np.zeros((self.n_sites, d, d), dtype=complex)
        self.drive_y = np.zeros((self.n_sites, d, d), dtype=complex)
        self.rydberg_diag = np.zeros((self.n_sites, d))
        levels = [space.site_levels(k) for k in range(self.n_sites)]
        for k, s in enumerate(sites):
            lv = levels[k]
            # |c><r| has ones where bra level = r and ket level = c, other sites equal
            stride = int(np.prod(space.dims[k + 1:]))
            src = np.nonzero(lv == s.rydberg_level)[0]
            dst = src - stride * (s.rydberg_level - s.coupled_level)
            a = np.zeros((d, d), dtype=complex)
            a[dst, src] = 1.0
            self.drive_x[k] = (a + a.conj().T) / 2
            self.drive_y[k] = 1j * (a - a.conj().T) / 2
            self.rydberg_diag[k] = site_projector_diagonal(k, s.rydberg_level, space)
        self.pair_list = system.pairs()
        table = system.interaction_table()
        self.v = np.array([table[i, j] for i, j in self.pair_list])
        self.pair_diag = np.array(
            [self.rydberg_diag[i] * self.rydberg_diag[j] for i, j in self.pair_list]
        ).reshape(len(self.pair_list), d)

    def site_parameters(self, drive: DriveSettings):
        """Per-site (omega, delta, phase) arrays from species-level settings."""
        omega = np.zeros(self.n_sites)
        delta = np.zeros(self.n_sites)
        phase = np.zeros(self.n_sites)
        for role in ROLES:
            sd = drive.for_role(role)
            mask = self.roles == role
            if sd.active:
                omega[mask] = sd.omega
                delta[mask] = sd.delta
                phase[mask] = sd.phase
        return omega, delta, phase

    def assemble(self, omega, delta, phase, v_scale=None) -> np.ndarray:
        """Hamiltonian matrix (or stack) in rad/us."""
        omega = np.asarray(omega, dtype=float)
        delta = np.asarray(delta, dtype=float)
        phase = np.asarray(phase, dtype=float)
        cx = omega * np.cos(phase)
        cy = omega * np.sin(phase)
        h = np.einsum("...k,kij->...ij", cx, self.drive_x)
        h = h + np.einsum("...k,kij->...ij", cy, self.drive_y)
        diag = -np.einsum("...k,kd->...d", delta, self.rydberg_diag)
        if len(self.pair_list):
            v = self.v if v_scale is None else self.v * np.asarray(v_scale, dtype=float)
            diag = diag + np.einsum("...p,pd->...d", v, self.pair_diag)
        d = self.space.dim
        batch = np.broadcast_shapes(h.shape[:-2], diag.shape[:-1])
        h = np.broadcast_to(h, batch + (d, d)).copy()
        idx = np.arange(d)
        h[..., idx, idx] += diag
        return 2 * np.pi * h


def build_hamiltonian(system: AtomSystem, drive: DriveSettings) -> HermitianOperator:
    """Rotating-frame Hamiltonian (rad/us) for one set of global beam settings."""
    terms = HamiltonianTerms(system)
    return HermitianOperator(terms.space, terms.assemble(*terms.site_parameters(drive)))


def two_atom_pair(v: float | None = None, distance: float | None = None, data_loaded: bool = True,
                  data_initial: str = "1", data_levels: int = 3,
                  inter: InterSpeciesParams = InterSpeciesParams()) -> AtomSystem:
    """Ancilla and one data atom; specify either ``v`` (MHz) or ``distance`` (um)."""
    if (v is None) == (distance is None):
        raise ValueError("give exactly one of v or distance")
    if distance is None:
        distance = vdw_distance(inter.c6_inter, v) if v > 0 else 1e3
    sites = (
        AtomSite("ancilla", (0.0, 0.0), initial="g"),
        AtomSite("data", (distance, 0.0), loaded=data_loaded, initial=data_initial,
                 n_levels=data_levels),
    )
    overrides = {(0, 1): float(v)} if v is not None else {}
    return AtomSystem(sites, inter=inter, overrides=overrides)


def plaquette_side_for(v_da: float, c6_inter: float = C6_INTER) -> float:
    """Square side length giving ancilla-data interaction ``v_da`` at the centre."""
    return math.sqrt(2) * vdw_distance(c6_inter, v_da)


def square_plaquette(side: float, loaded: Sequence[bool] = (True,) * 4,
                     initial: str | Sequence[str] = "1", data_levels: int = 3,
                     include_data_data: bool = True, **kwargs) -> AtomSystem:
    """Central ancilla and four data atoms on the corners of a square.

    Data atoms are in row-major order (y, then x); corners 0-3 and 1-2 are
    diagonal partners.
    """
    if len(loaded) != 4:
        raise ValueError("a plaquette has four data sites")
    if isinstance(initial, str):
        initial = [initial] * 4
    h = side / 2
    corners = [(-h, -h), (h, -h), (-h, h), (h, h)]
    sites = [AtomSite("ancilla", (0.0, 0.0), initial="g")]
    sites += [AtomSite("data", c, loaded=bool(l), initial=ini, n_levels=data_levels)
              for c, l, ini in zip(corners, loaded, initial)]
    return AtomSystem(tuple(sites), include_data_data=include_data_data, **kwargs)
