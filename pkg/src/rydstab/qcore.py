"""Dense linear algebra for small tensor-product quantum systems.

Sites are ordered with site 0 slowest-varying in the flattened basis index,
i.e. the global basis is ``np.kron(site0, np.kron(site1, ...))``.

Hamiltonians handed to :func:`propagator` are in angular units (rad/us) and
durations in microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

MAX_DIMENSION = 1024
HERMITIAN_TOL = 1e-10


class DimensionError(ValueError):
    """Operator or state shape does not match the level space."""


@dataclass(frozen=True)
class LevelSpace:
    """Per-site level counts of a tensor-product Hilbert space."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims:
            raise DimensionError("level space needs at least one site")
        if any(d < 2 for d in dims):
            raise DimensionError(f"every site needs >= 2 levels, got {dims}")
        if self.dim > MAX_DIMENSION:
            raise DimensionError(
                f"total dimension {self.dim} exceeds desk-scale limit {MAX_DIMENSION}"
            )

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def index(self, levels: Sequence[int]) -> int:
        """Flattened basis index of a product of site levels."""
        if len(levels) != self.n_sites:
            raise DimensionError(f"expected {self.n_sites} levels, got {len(levels)}")
        for site, (lvl, d) in enumerate(zip(levels, self.dims)):
            if not 0 <= lvl < d:
                raise DimensionError(f"level {lvl} invalid at site {site} (dim {d})")
        return int(np.ravel_multi_index(tuple(levels), self.dims))

    def site_levels(self, site: int) -> np.ndarray:
        """Level of ``site`` for every global basis index."""
        self._check_site(site)
        grid = np.indices(self.dims).reshape(self.n_sites, -1)
        return grid[site]

    def _check_site(self, site: int) -> None:
        if not 0 <= site < self.n_sites:
            raise DimensionError(f"site {site} out of range for {self.n_sites} sites")


@dataclass(frozen=True)
class QuantumState:
    """Pure state vector or density matrix on a :class:`LevelSpace`."""

    space: LevelSpace
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        d = self.space.dim
        if data.shape == (d,):
            norm = np.linalg.norm(data)
            if abs(norm - 1.0) > 1e-10:
                raise ValueError(f"state vector norm {norm:.3e} differs from 1")
        elif data.shape == (d, d):
            if np.max(np.abs(data - data.conj().T)) > 1e-10:
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(data).real
            if abs(tr - 1.0) > 1e-10:
                raise ValueError(f"density matrix trace {tr:.3e} differs from 1")
            if np.linalg.eigvalsh(data).min() < -1e-9:
                raise ValueError("density matrix is not positive semidefinite")
        else:
            raise DimensionError(f"state shape {data.shape} does not fit dimension {d}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data.copy()

    def probabilities(self) -> np.ndarray:
        """Born probabilities in the product level basis."""
        if self.is_pure:
            p = np.abs(self.data) ** 2
        else:
            p = np.real(np.diag(self.data)).copy()
        return np.clip(p, 0.0, None)

    @classmethod
    def product(cls, space: LevelSpace, site_vectors: Sequence[np.ndarray]) -> "QuantumState":
        """Tensor product of normalized single-site amplitude vectors."""
        if len(site_vectors) != space.n_sites:
            raise DimensionError("one vector per site required")
        vecs = []
        for site, (v, d) in enumerate(zip(site_vectors, space.dims)):
            v = np.asarray(v, dtype=complex)
            if v.shape != (d,):
                raise DimensionError(f"site {site}: vector of length {d} expected")
            vecs.append(v / np.linalg.norm(v))
        return cls(space, reduce(np.kron, vecs))

    @classmethod
    def basis(cls, space: LevelSpace, levels: Sequence[int]) -> "QuantumState":
        psi = np.zeros(space.dim, dtype=complex)
        psi[space.index(levels)] = 1.0
        return cls(space, psi)


@dataclass(frozen=True)
class HermitianOperator:
    """Hamiltonian matrix in angular frequency units (rad/us)."""

    space: LevelSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise DimensionError(f"operator shape {m.shape} does not fit dimension {d}")
        check_hermitian(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def check_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    err = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if err > tol * scale:
        raise ValueError(f"operator is not Hermitian (max deviation {err:.3e})")


def embed_single_site(op: np.ndarray, site: int, space: LevelSpace) -> np.ndarray:
    """Return identity (x) ... (x) op (x) ... (x) identity with ``op`` at ``site``."""
    space._check_site(site)
    op = np.asarray(op, dtype=complex)
    d = space.dims[site]
    if op.shape != (d, d):
        raise DimensionError(f"site {site} has {d} levels but operator shape is {op.shape}")
    left = int(np.prod(space.dims[:site]))
    right = int(np.prod(space.dims[site + 1:]))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def site_projector_diagonal(site: int, level: int, space: LevelSpace) -> np.ndarray:
    """Diagonal (as a vector) of the projector onto ``site`` in ``level``."""
    if not 0 <= level < space.dims[site]:
        raise DimensionError(f"level {level} invalid at site {site}")
    return (space.site_levels(site) == level).astype(float)


def embed_pair_projector(site_a: int, level_a: int, site_b: int, level_b: int,
                         space: LevelSpace) -> np.ndarray:
    """Projector onto site_a in level_a and site_b in level_b."""
    if site_a == site_b:
        raise DimensionError(f"pair projector needs two distinct sites, got {site_a} twice")
    space._check_site(site_a)
    space._check_site(site_b)
    diag = (site_projector_diagonal(site_a, level_a, space)
            * site_projector_diagonal(site_b, level_b, space))
    return np.diag(diag).astype(complex)


def propagator(H, t: float) -> np.ndarray:
    """exp(-i H t) via Hermitian eigendecomposition.

    ``H`` may be a :class:`HermitianOperator` or a square array; a stacked
    array of shape (..., d, d) yields stacked propagators.
    """
    if t < 0:
        raise ValueError(f"duration must be non-negative, got {t}")
    m = H.matrix if isinstance(H, HermitianOperator) else np.asarray(H, dtype=complex)
    if m.ndim == 2:
        check_hermitian(m)
    evals, evecs = np.linalg.eigh(m)
    phases = np.exp(-1j * evals * t)
    return (evecs * phases[..., None, :]) @ np.swapaxes(evecs.conj(), -1, -2)


def apply(U: np.ndarray, state: QuantumState) -> QuantumState:
    if state.is_pure:
        return QuantumState(state.space, U @ state.data)
    return QuantumState(state.space, U @ state.data @ U.conj().T)


def population(state: QuantumState, site: int, level: int) -> float:
    """Marginal probability of ``site`` being in ``level``."""
    mask = site_projector_diagonal(site, level, state.space)
    p = float(np.dot(mask, state.probabilities()))
    return min(max(p, 0.0), 1.0)


def branch_amplitude(state: QuantumState, conditioning: Sequence[tuple[int, int]]) -> np.ndarray:
    """Un-normalized amplitudes on the remaining sites with some sites fixed.

    ``conditioning`` is a list of ``(site, level)`` pairs. The result is
    shaped by the dims of the unconditioned sites in their original order,
    flattened.
    """
    if not state.is_pure:
        raise TypeError("branch amplitudes are only defined for pure state vectors")
    space = state.space
    psi = state.data.reshape(space.dims)
    index: list = [slice(None)] * space.n_sites
    for site, level in conditioning:
        space._check_site(site)
        if not 0 <= level < space.dims[site]:
            raise DimensionError(f"level {level} invalid at site {site}")
        index[site] = level
    return np.array(psi[tuple(index)]).reshape(-1)


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """Overlap fidelity; for two pure states |<a|b>|^2, else <psi|rho|psi> or Tr(rho sigma)."""
    if a.is_pure and b.is_pure:
        return float(abs(np.vdot(a.data, b.data)) ** 2)
    if a.is_pure:
        return float(np.real(np.vdot(a.data, b.data @ a.data)))
    if b.is_pure:
        return float(np.real(np.vdot(b.data, a.data @ b.data)))
    return float(np.real(np.trace(a.data @ b.data)))
