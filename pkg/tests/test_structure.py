import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from contracta.channels import (
    KrausChannel, gallery_counterexample, gallery_depolarizing, identity_channel, random_channel,
)
from contracta.linalg import partial_trace, proj, random_hermitian, random_unit_vector, vec
from contracta.lower_bounds import seesaw_eta
from contracta.structure import (
    CERTIFIED_BELOW, CERTIFIED_ONE, OperatorSubspace, channel_from_operator_system,
    composed_choi, confusability_graph, embed_top_right, eta_one_report, full_space, hat_extension,
    hat_sandwich_point, kernel_subspace_from_projector, l_sep_lower_ppt, l_sep_upper,
    orthogonal_complement, planted_operator_system, random_projector, rank_one_distance,
    subspace_distance, subspace_from_dict, subspace_to_dict,
)

seeds = st.integers(0, 2 ** 32 - 1)


def E(n, i, j):
    M = np.zeros((n, n), dtype=complex)
    M[i, j] = 1
    return M


def random_operator_system(n, r, g):
    return OperatorSubspace.span(np.array([np.eye(n)] + [random_hermitian(n, g) for _ in range(r)]))


def test_basis_must_be_orthonormal():
    with pytest.raises(ValueError):
        OperatorSubspace(2, 2, np.array([np.eye(2)]))
    with pytest.raises(ValueError):
        OperatorSubspace(2, 2, np.array([E(2, 0, 1)]), hermitian=True)


def test_confusability_graph_examples():
    G = confusability_graph(identity_channel(2))
    assert G.dim == 1 and G.contains(np.eye(2) / np.sqrt(2))
    assert confusability_graph(gallery_counterexample(3)).dim == 9
    diag = KrausChannel(2, 2, (E(2, 0, 0), E(2, 1, 1)))
    G = confusability_graph(diag)
    assert G.dim == 2 and G.contains(np.diag([1.0, -3.0])) and not G.contains(E(2, 0, 1))


@given(seeds, st.integers(2, 3))
def test_confusability_graph_is_operator_system(seed, d):
    ch = random_channel(d, 2, np.random.default_rng(seed), n_kraus=2)
    G = confusability_graph(ch)
    assert G.hermitian and G.contains(np.eye(d))
    gram = G.vecs().conj() @ G.vecs().T
    assert np.abs(gram - np.eye(G.dim)).max() <= 1e-10


def test_complement_examples(rng):
    C = orthogonal_complement(OperatorSubspace.span(np.eye(2)))
    assert C.dim == 3
    assert all(abs(np.trace(b)) < 1e-12 for b in C.basis)
    assert orthogonal_complement(full_space(2, 2)).dim == 0
    S = OperatorSubspace.span(rng.normal(size=(3, 3, 3)) + 1j * rng.normal(size=(3, 3, 3)))
    C = orthogonal_complement(S)
    assert C.dim == 6
    assert subspace_distance(orthogonal_complement(C), S) <= 1e-10


@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(0, 9))
def test_complement_properties(seed, p, q, r):
    g = np.random.default_rng(seed)
    r = min(r, p * q)
    S = OperatorSubspace.span(g.normal(size=(r, p, q)) + 1j * g.normal(size=(r, p, q)), p, q)
    C = orthogonal_complement(S)
    assert S.dim + C.dim == p * q
    if S.dim and C.dim:
        assert np.abs(S.vecs().conj() @ C.vecs().T).max() <= 1e-10


def test_channel_from_operator_system_examples():
    S = OperatorSubspace.span(np.eye(2))
    ch = channel_from_operator_system(S)
    assert subspace_distance(confusability_graph(ch), S) <= 1e-8
    D = OperatorSubspace.span(np.array([E(2, 0, 0), E(2, 1, 1)]))
    assert subspace_distance(confusability_graph(channel_from_operator_system(D)), D) <= 1e-8
    full = full_space(2, 2)
    ch = channel_from_operator_system(full)
    assert confusability_graph(ch).dim == 4
    assert orthogonal_complement(confusability_graph(ch)).dim == 0


def test_channel_from_operator_system_errors():
    with pytest.raises(ValueError):
        channel_from_operator_system(OperatorSubspace.span(np.diag([1.0, 0.0])))
    with pytest.raises(ValueError):
        channel_from_operator_system(OperatorSubspace.span(np.array([np.eye(2), E(2, 0, 1)])))


@given(seeds, st.integers(2, 3), st.integers(0, 3))
def test_operator_system_roundtrip(seed, n, r):
    S = random_operator_system(n, r, np.random.default_rng(seed))
    ch = channel_from_operator_system(S)
    K = ch.stacked()
    assert np.abs(np.einsum("kji,kjl->il", K.conj(), K) - np.eye(n)).max() <= 1e-9
    assert subspace_distance(confusability_graph(ch), S) <= 1e-8
    # K_i* K_j vanishes for i != j
    for i in range(len(K)):
        for j in range(len(K)):
            if i != j:
                assert np.abs(K[i].conj().T @ K[j]).max() <= 1e-12


def test_kernel_subspace_examples():
    assert kernel_subspace_from_projector(np.zeros((4, 4))).dim == 4
    assert kernel_subspace_from_projector(np.eye(4)).dim == 0
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    S = kernel_subspace_from_projector(proj(psi))
    assert S.dim == 3
    # the kernel of the Bell projector is the traceless 2x2 matrices
    assert S.contains(np.diag([1.0, -1.0])) and S.contains(E(2, 0, 1)) and not S.contains(np.eye(2))
    with pytest.raises(ValueError):
        kernel_subspace_from_projector(np.diag([1.0, 0.5, 0, 0]))


@given(seeds, st.integers(2, 3), st.integers(0, 9))
def test_kernel_quadratic_form_is_distance(seed, n, rank):
    g = np.random.default_rng(seed)
    rank = min(rank, n * n)
    Pi = random_projector(n * n, rank, g)
    S = kernel_subspace_from_projector(Pi, n, n)
    u, v = random_unit_vector(n, g), random_unit_vector(n, g)
    lhs = np.vdot(np.kron(proj(u), proj(v)), Pi).real
    assert abs(lhs - S.distance(np.outer(u, v)) ** 2) <= 1e-8


def test_hat_extension_examples(rng):
    zero = OperatorSubspace(2, 2, np.zeros((0, 2, 2)))
    H, P = hat_extension(zero)
    assert H.dim == 0 and P.dim == 16
    H, P = hat_extension(full_space(2, 3))
    assert H.dim == 12
    assert H.contains(embed_top_right(full_space(2, 3), np.ones((2, 3))))
    S = OperatorSubspace.span(rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2)))
    H, P = hat_extension(S)
    assert P.dim == 4 + 4 + 2 * 2


@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(0, 6))
def test_hat_extension_properties(seed, n, m, r):
    g = np.random.default_rng(seed)
    r = min(r, n * m)
    S = OperatorSubspace.span(g.normal(size=(r, n, m)) + 1j * g.normal(size=(r, n, m)), n, m)
    H, P = hat_extension(S)
    N = n + m
    assert H.dim + P.dim == N * N
    assert P.is_self_adjoint() and P.contains(np.eye(N))
    assert all(np.allclose(b, b.conj().T) for b in P.basis)
    assert subspace_distance(orthogonal_complement(H), P) <= 1e-8


def test_hat_sandwich_samples(rng):
    for _ in range(5):
        S = OperatorSubspace.span(rng.normal(size=(3, 2, 3)) + 1j * rng.normal(size=(3, 2, 3)))
        H, _ = hat_extension(S)
        for _ in range(40):
            z = random_unit_vector(5, rng)
            w = random_unit_vector(5, rng)
            assert hat_sandwich_point(S, H, np.outer(z, w.conj())).ok


def test_rank_one_distance_examples():
    S = OperatorSubspace.span(np.array([E(2, 0, 0), E(2, 0, 1) + E(2, 1, 0)]))
    assert rank_one_distance(S).distance <= 1e-7
    assert rank_one_distance(OperatorSubspace(2, 2, np.zeros((0, 2, 2)))).distance == pytest.approx(1)


def test_rank_one_distance_bloch_grid():
    S = OperatorSubspace.span(np.diag([1.0, -1.0]) / np.sqrt(2))
    th, ph = np.meshgrid(np.linspace(0, np.pi, 41), np.linspace(0, 2 * np.pi, 41))
    pts = np.stack([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)], -1).reshape(-1, 2)
    X = np.einsum("ai,bj->abij", pts, pts.conj()).reshape(-1, 4)
    Pp = np.eye(4) - S.projector()
    best = np.sqrt(np.min(np.linalg.norm(X @ Pp.T, axis=1) ** 2))
    found = rank_one_distance(S).distance
    assert found <= best + 1e-9
    assert found == pytest.approx(1 / np.sqrt(2), abs=1e-6)


def test_rank_one_distance_degenerate_zero():
    # the zero at u = v = e_1 is degenerate; plain alternation converges sublinearly
    S = OperatorSubspace.span(np.array([E(2, 0, 0), E(2, 0, 1) + E(2, 1, 0)]))
    r = rank_one_distance(S, restarts=2)
    assert r.distance <= 1e-10
    assert S.contains(r.witness)


def test_rank_one_witness_is_consistent(rng):
    S, x = planted_operator_system(3, 2, rng)
    C = orthogonal_complement(S)
    r = rank_one_distance(C)
    assert r.distance == pytest.approx(C.distance(r.witness), abs=1e-9)
    assert r.distance <= 1e-7


def test_l_sep_examples():
    assert l_sep_upper(np.eye(4), (2, 2))[0] == pytest.approx(1)
    assert l_sep_lower_ppt(np.eye(4), (2, 2)) == pytest.approx(1, abs=1e-7)
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert l_sep_upper(proj(psi), (2, 2))[0] == pytest.approx(0, abs=1e-9)
    # projector whose kernel contains the product vector |0>|1>
    Pi = np.eye(4) - proj(np.kron([1, 0], [0, 1]))
    val, u, v = l_sep_upper(Pi, (2, 2))
    assert val == pytest.approx(0, abs=1e-9)
    assert np.vdot(np.kron(u, v), Pi @ np.kron(u, v)).real == pytest.approx(val, abs=1e-12)
    assert l_sep_lower_ppt(Pi, (2, 2)) <= 1e-7


@pytest.mark.parametrize("seed", range(4))
def test_ppt_equals_sep_in_two_qubits(seed):
    A = random_hermitian(4, np.random.default_rng(seed))
    up = l_sep_upper(A, (2, 2), restarts=32)[0]
    low = l_sep_lower_ppt(A, (2, 2))
    assert low <= up + 1e-7
    assert up == pytest.approx(low, abs=1e-5)


def test_composed_choi_normalized(rng):
    ch = random_channel(2, 2, rng)
    J = composed_choi(ch)
    assert np.trace(J).real == pytest.approx(1)
    assert np.linalg.eigvalsh(J)[0] >= -1e-12
    # tracing out the reference leaves a multiple of Phi*(Phi(I))
    K = ch.stacked()
    PP = sum(Ki.conj().T @ Kj @ Kj.conj().T @ Ki for Ki in K for Kj in K)
    M = partial_trace(J, (2, 2), 0)
    assert np.allclose(M / np.trace(M), PP / np.trace(PP))


def test_eta_one_report_examples():
    rep = eta_one_report(identity_channel(2), restarts=4)
    assert rep.verdict == CERTIFIED_ONE and rep.witness_trace_distance == pytest.approx(2)
    rep = eta_one_report(gallery_counterexample(3), restarts=4, sdp_level=1)
    assert rep.verdict == CERTIFIED_BELOW
    assert rep.complement_dim == 0 and rep.lsep_lower_ppt > 0
    assert rep.sdp_upper == pytest.approx(0.5, abs=1e-4)
    S = OperatorSubspace.span(np.array([np.eye(3), E(3, 0, 1) + E(3, 1, 0), 1j * (E(3, 0, 1) - E(3, 1, 0))]))
    rep = eta_one_report(channel_from_operator_system(S), restarts=4)
    assert rep.verdict == CERTIFIED_ONE
    assert rep.witness_trace_distance >= 2 - 1e-6


def test_depolarizing_not_certified():
    rep = eta_one_report(gallery_depolarizing(0.5), restarts=4, sdp_level=1)
    assert rep.verdict == CERTIFIED_BELOW
    assert rep.to_dict()["sdp_upper"] == pytest.approx(0.5, abs=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_zero_distance_implies_seesaw_one(seed):
    S, _ = planted_operator_system(3, 2, np.random.default_rng(seed))
    ch = channel_from_operator_system(S)
    r = rank_one_distance(orthogonal_complement(confusability_graph(ch)))
    assert r.distance <= 1e-7
    assert seesaw_eta(ch, restarts=8).value >= 1 - 1e-4


def test_subspace_json_roundtrip(rng):
    S = random_operator_system(2, 1, rng)
    T = subspace_from_dict(json.loads(json.dumps(subspace_to_dict(S))))
    assert subspace_distance(S, T) <= 1e-12 and T.hermitian
    assert vec(np.eye(2)).shape == (4,)
