import numpy as np
import pytest
from hypothesis import given, strategies as st

from contracta.linalg import (
    eig_hermitian, fidelity, hermitian_sign, kron, partial_trace, partial_transpose,
    proj, random_density, random_hermitian, trace_norm, unvec, vec,
)

seeds = st.integers(0, 2 ** 32 - 1)


def charpoly_roots(H):
    # independent oracle: roots of det(tI - H)
    return np.sort(np.roots(np.poly(H)).real)[::-1]


def test_eig_identity():
    w, V = eig_hermitian(np.eye(2))
    assert np.allclose(w, [1, 1])
    assert np.allclose(V.conj().T @ V, np.eye(2))


def test_eig_diag_sorted_descending():
    w, V = eig_hermitian(np.diag([3.0, -1.0]))
    assert np.allclose(w, [3, -1])
    assert np.allclose(np.abs(V), np.eye(2))


@pytest.mark.parametrize("n", [2, 3])
def test_eig_against_characteristic_polynomial(n, rng):
    H = random_hermitian(n, rng)
    w, _ = eig_hermitian(H)
    assert np.allclose(w, charpoly_roots(H), atol=1e-9)


@given(seeds, st.integers(1, 6))
def test_eig_reconstruction(seed, n):
    H = random_hermitian(n, np.random.default_rng(seed))
    w, V = eig_hermitian(H)
    assert np.all(np.diff(w) <= 1e-12)
    scale = max(1.0, np.abs(w).max())
    assert np.abs(V @ np.diag(w) @ V.conj().T - H).max() <= 1e-10 * n * scale
    assert np.abs(V.conj().T @ V - np.eye(n)).max() <= 1e-10


def test_eig_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eig_hermitian(np.array([[0, 1], [0, 0]]))


def test_trace_norm_examples():
    assert trace_norm(np.eye(2)) == pytest.approx(2)
    assert trace_norm(np.diag([1, -1])) == pytest.approx(2)
    u = np.array([1, 1j, 0]) / np.sqrt(2)
    v = np.array([0, 1, 1]) / np.sqrt(2)
    assert trace_norm(np.outer(u, v.conj())) == pytest.approx(1)


def test_trace_norm_rectangular():
    M = np.array([[3.0, 0, 0], [0, 4.0, 0]])
    assert trace_norm(M) == pytest.approx(7)


@given(seeds, st.integers(1, 5))
def test_holder_duality_sign_witness(seed, n):
    A = random_hermitian(n, np.random.default_rng(seed))
    X = hermitian_sign(A)
    assert np.linalg.norm(X, 2) <= 1 + 1e-12
    assert abs(np.vdot(X, A).real - trace_norm(A)) <= 1e-9


def test_partial_trace_examples(rng):
    rho, sigma = random_density(2, rng), random_density(3, rng)
    assert np.allclose(partial_trace(np.kron(rho, sigma), (2, 3), 1), rho)
    assert np.allclose(partial_trace(np.eye(4), (2, 2), 0), 2 * np.eye(2))
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert np.allclose(partial_trace(proj(psi), (2, 2), 1), np.eye(2) / 2)


@given(seeds)
def test_partial_trace_product_and_trace(seed):
    g = np.random.default_rng(seed)
    A, B = random_hermitian(2, g), random_hermitian(3, g)
    assert np.allclose(partial_trace(np.kron(A, B), (2, 3), 1), np.trace(B) * A)
    M = random_hermitian(12, g)
    assert np.isclose(np.trace(partial_trace(M, (2, 3, 2), [0, 2])), np.trace(M))


def test_partial_trace_dim_mismatch():
    with pytest.raises(ValueError):
        partial_trace(np.eye(4), (2, 3), 0)


def test_partial_transpose_examples(rng):
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    # 4x4 eigen-solve: the flip operator / 2 has spectrum {1/2, 1/2, 1/2, -1/2}
    w = np.linalg.eigvalsh(partial_transpose(proj(psi), (2, 2), 1))
    assert w[0] == pytest.approx(-0.5)
    prod = np.kron(random_density(2, rng), random_density(2, rng))
    assert np.linalg.eigvalsh(partial_transpose(prod, (2, 2), 1))[0] >= -1e-12


@given(seeds)
def test_partial_transpose_properties(seed):
    g = np.random.default_rng(seed)
    A, B = random_hermitian(2, g), random_hermitian(3, g)
    M = random_hermitian(6, g)
    assert np.allclose(partial_transpose(partial_transpose(M, (2, 3), 1), (2, 3), 1), M)
    assert np.isclose(np.trace(partial_transpose(M, (2, 3), 0)), np.trace(M))
    assert np.allclose(partial_transpose(np.kron(A, B), (2, 3), 1), np.kron(A, B.T))


def test_fidelity_examples(rng):
    rho = random_density(3, rng)
    assert fidelity(rho, rho) == pytest.approx(1)
    assert fidelity(proj([1, 0]), proj([0, 1])) == pytest.approx(0, abs=1e-12)
    assert fidelity(proj([1, 0]), proj(np.array([1, 1]) / np.sqrt(2))) == pytest.approx(0.5)


def test_fidelity_rejects_non_state():
    with pytest.raises(ValueError):
        fidelity(np.diag([1.5, -0.5]), np.eye(2) / 2)


def test_fuchs_van_de_graaf(rng):
    for _ in range(1000):
        rho, sigma = random_density(2, rng), random_density(2, rng)
        F = fidelity(rho, sigma)
        assert fidelity(sigma, rho) == pytest.approx(F, abs=1e-9)
        assert 0.5 * trace_norm(rho - sigma) <= np.sqrt(max(0.0, 1 - F)) + 1e-9


def test_vec_elementary_and_roundtrip(rng):
    E12 = np.zeros((2, 2))
    E12[0, 1] = 1
    assert np.allclose(vec(E12), np.kron([1, 0], [0, 1]))
    M = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
    assert np.allclose(unvec(vec(M), 3, 2), M)
    with pytest.raises(ValueError):
        unvec(np.zeros(5), 2, 2)


@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_vec_isometry_and_rank_one(seed, p, q):
    g = np.random.default_rng(seed)
    x = g.normal(size=(p, q)) + 1j * g.normal(size=(p, q))
    y = g.normal(size=(p, q)) + 1j * g.normal(size=(p, q))
    assert np.isclose(np.linalg.norm(vec(x)), np.linalg.norm(x))
    assert np.isclose(np.vdot(vec(x), vec(y)), np.vdot(x, y))
    u, v = g.normal(size=p) + 1j * g.normal(size=p), g.normal(size=q) + 1j * g.normal(size=q)
    assert np.allclose(vec(np.outer(u, v.conj())), np.kron(u, v.conj()))


def test_kron_many():
    assert kron(np.eye(2), np.eye(3)).shape == (6, 6)
