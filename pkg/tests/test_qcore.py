import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rydstab import qcore
from rydstab.qcore import DimensionError, HermitianOperator, LevelSpace, QuantumState

SX = np.array([[0, 1], [1, 0]], dtype=complex)


def test_level_space_dimension_and_guard():
    s = LevelSpace((2, 3, 3))
    assert s.dim == 18 and s.n_sites == 3
    with pytest.raises(DimensionError):
        LevelSpace((1, 2))
    with pytest.raises(DimensionError):
        LevelSpace((2,) * 11)  # 2048 > 1024


def test_state_invariants_rejected():
    s = LevelSpace((2,))
    with pytest.raises(ValueError):
        QuantumState(s, [1, 1])
    with pytest.raises(ValueError):
        QuantumState(s, np.array([[0.5, 0.6], [0.6, 0.5]]))  # negative eigenvalue
    with pytest.raises(ValueError):
        QuantumState(s, np.array([[1, 0.1], [0, 0]]))  # not Hermitian
    with pytest.raises(DimensionError):
        QuantumState(s, [1, 0, 0])


def test_embed_sigma_x_flips_site0():
    s = LevelSpace((2, 2))
    op = qcore.embed_single_site(SX, 0, s)
    out = op @ QuantumState.basis(s, (0, 0)).data
    assert np.allclose(out, QuantumState.basis(s, (1, 0)).data)


def test_embed_identity_and_projector():
    s = LevelSpace((2, 3))
    assert np.allclose(qcore.embed_single_site(np.eye(3), 1, s), np.eye(6))
    proj = np.diag([0, 0, 1]).astype(complex)
    psi = QuantumState.basis(s, (0, 2)).data
    assert np.vdot(psi, qcore.embed_single_site(proj, 1, s) @ psi).real == pytest.approx(1.0)


def test_embed_dimension_mismatch_names_site():
    with pytest.raises(DimensionError, match="site 1"):
        qcore.embed_single_site(np.eye(2), 1, LevelSpace((2, 3)))


def test_pair_projector():
    s = LevelSpace((2, 3))
    P = qcore.embed_pair_projector(0, 1, 1, 2, s)
    rr = QuantumState.basis(s, (1, 2)).data
    g1 = QuantumState.basis(s, (0, 1)).data
    assert np.vdot(rr, P @ rr).real == pytest.approx(1.0)
    assert np.vdot(g1, P @ g1).real == pytest.approx(0.0)
    assert np.trace(P).real == pytest.approx(1.0)
    with pytest.raises(ValueError):
        qcore.embed_pair_projector(0, 1, 0, 1, s)


def test_propagator_examples():
    assert np.allclose(qcore.propagator(np.zeros((3, 3)), 2.7), np.eye(3))
    H = np.pi * 1.0 * SX  # (2 pi / 2) Omega sigma_x with Omega = 1 MHz
    out = qcore.propagator(H, 0.5) @ np.array([1, 0])
    assert np.allclose(out, [0, -1j], atol=1e-12)
    v, t = 0.37, 1.9
    U = qcore.propagator(np.diag([0, 2 * np.pi * v]), t)
    assert U[1, 1] == pytest.approx(np.exp(-2j * np.pi * v * t))


def test_propagator_rejects_non_hermitian_and_negative_time():
    with pytest.raises(ValueError):
        qcore.propagator(np.array([[0, 1], [0, 0]]), 1.0)
    with pytest.raises(ValueError):
        qcore.propagator(np.eye(2), -1.0)


def test_population_examples():
    s = LevelSpace((2, 3))
    assert qcore.population(QuantumState.basis(s, (0, 1)), 0, 0) == pytest.approx(1.0)
    s1 = LevelSpace((2,))
    plus_i = QuantumState(s1, np.array([1, 1j]) / np.sqrt(2))
    assert qcore.population(plus_i, 0, 1) == pytest.approx(0.5)
    mixed = QuantumState(s1, np.eye(2) / 2)
    assert qcore.population(mixed, 0, 0) == pytest.approx(0.5)


def test_branch_amplitude_examples():
    s = LevelSpace((2, 3))
    psi = (QuantumState.basis(s, (0, 1)).data - QuantumState.basis(s, (1, 1)).data) / np.sqrt(2)
    amp = qcore.branch_amplitude(QuantumState(s, psi), [(0, 0)])
    assert np.allclose(amp, [0, 1 / np.sqrt(2), 0])
    a = np.array([1, 1j]) / np.sqrt(2)
    b = np.array([0.6, 0.8j, 0])
    prod = QuantumState.product(s, [a, b])
    assert np.allclose(qcore.branch_amplitude(prod, [(0, 1)]), a[1] * b)
    with pytest.raises(TypeError):
        qcore.branch_amplitude(QuantumState(s, prod.density_matrix()), [(0, 0)])


def random_hermitian(d, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (m + m.conj().T) * 3


@given(st.integers(2, 12), st.integers(0, 10**6), st.floats(0, 5), st.floats(0, 5))
def test_propagator_unitary_and_composition(d, seed, t1, t2):
    H = random_hermitian(d, seed)
    U1, U2 = qcore.propagator(H, t1), qcore.propagator(H, t2)
    assert np.max(np.abs(U1.conj().T @ U1 - np.eye(d))) < 1e-9
    assert np.max(np.abs(qcore.propagator(H, t1 + t2) - U2 @ U1)) < 1e-9
    psi = np.random.default_rng(seed).normal(size=d) + 0j
    psi /= np.linalg.norm(psi)
    assert abs(np.linalg.norm(U1 @ psi) - 1) < 1e-10


@given(arrays(np.float64, 4, elements=st.floats(-1, 1)), arrays(np.float64, 9, elements=st.floats(-1, 1)),
       st.integers(0, 1))
def test_embedding_matches_marginal_expectation(va, op_entries, site):
    s = LevelSpace((2, 3))
    rng = np.random.default_rng(7)
    a = rng.normal(size=2) + 1j * rng.normal(size=2)
    b = rng.normal(size=3) + 1j * va[:3].sum() + 0.1
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    d = s.dims[site]
    m = op_entries[: d * d].reshape(d, d)
    op = m + m.T
    state = QuantumState.product(s, [a, b])
    full = np.vdot(state.data, qcore.embed_single_site(op, site, s) @ state.data)
    local = [a, b][site]
    assert abs(full - np.vdot(local, op @ local)) < 1e-10


def test_fidelity_pure_and_mixed():
    s = LevelSpace((2,))
    g = QuantumState.basis(s, (0,))
    plus = QuantumState(s, np.array([1, 1]) / np.sqrt(2))
    assert qcore.fidelity(g, plus) == pytest.approx(0.5)
    mixed = QuantumState(s, np.eye(2) / 2)
    assert qcore.fidelity(g, mixed) == pytest.approx(0.5)


def test_hermitian_operator_validation():
    with pytest.raises(ValueError):
        HermitianOperator(LevelSpace((2,)), np.array([[0, 1], [2, 0]]))
