import itertools

import numpy as np
import pytest

from contracta.channels import (
    KrausChannel, choi, gallery_amplitude_damping, gallery_counterexample, gallery_depolarizing,
    identity_channel, random_channel, tensor_power,
)
from contracta.hierarchy import (
    HierarchyLevelSpec, bilinear_form_check, build_sdp, eta_upper_bound, logical_blocks,
    logical_to_solver, marginal_residuals, objective_value, output_sectors, product_point, solve_level,
)
from contracta.linalg import hermitian_sign, random_density, random_hermitian
from contracta.lower_bounds import psucc_seesaw, psucc_value

from conftest import random_qubit_channels

GENERAL = dict(dephase=False, sectors=False)


def sectored_channel(seed=5):
    """Qubit-input channel into C^3 whose Kraus operators each live on {0} or {1, 2}."""
    g = np.random.default_rng(seed)
    base = random_channel(2, 3, g, n_kraus=3)
    P1, P2 = np.diag([1.0, 0, 0]), np.diag([0, 1.0, 1.0])
    ks = [P @ K for K in base.kraus for P in (P1, P2)]
    return KrausChannel(2, 3, tuple(ks))


def test_block_counts(rng):
    ch = random_channel(2, 2, rng)
    prob, _ = build_sdp(ch, HierarchyLevelSpec(k=2, m=1, **GENERAL))
    assert [b.dim for b in prob.blocks] == [4] * 4
    prob, _ = build_sdp(ch, HierarchyLevelSpec(k=2, m=2, symmetry_reduction=False, **GENERAL))
    assert [b.dim for b in prob.blocks] == [8] * 8


def test_symmetry_reduction_shrinks_blocks(rng):
    ch = random_channel(2, 2, rng)
    prob, _ = build_sdp(ch, HierarchyLevelSpec(k=2, m=2, **GENERAL))
    # one representative per multiset {j1, j2}: 2 * 3 blocks
    assert len(prob.blocks) == 6


@pytest.mark.parametrize("m", [1, 2])
def test_product_point_feasible(m, rng):
    ch = random_channel(2, 2, rng)
    k = 2
    rhos = [random_density(2, rng) for _ in range(k)]
    P = hermitian_sign(random_hermitian(2, rng))
    povm = [(np.eye(2) + P) / 2, (np.eye(2) - P) / 2]
    pt = product_point(rhos, povm, m)
    J = choi(ch).matrix
    res = marginal_residuals(pt, J, 2, 2, k, m)
    assert max(res.values()) <= 1e-12
    # objective of a product point is the success probability of that strategy
    assert objective_value(pt, J, 2, 2, k, m) == pytest.approx(psucc_value(ch, rhos, povm), abs=1e-12)
    spec = HierarchyLevelSpec(k=k, m=m, symmetry_reduction=False, **GENERAL)
    prob, layout = build_sdp(ch, spec)
    X = logical_to_solver(pt, prob, layout, spec)
    assert np.abs(prob.apply_constraints(X) - prob.rhs()).max() <= 1e-10


@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_depolarizing_first_level(p):
    r = solve_level(gallery_depolarizing(p))
    assert r.eta_bound == pytest.approx(1 - p, abs=1e-5)
    assert r.psucc_bound == pytest.approx(1 - p / 2, abs=1e-5)


def test_counterexample_first_level():
    assert eta_upper_bound(gallery_counterexample(3), 1) == pytest.approx(0.5, abs=1e-4)


@pytest.mark.parametrize("p,eta", [(0.2, 0.5), (0.5, 0.8), (0.8, 0.2)])
def test_amplitude_damping_first_level(p, eta):
    assert eta_upper_bound(gallery_amplitude_damping(p, eta), 1) == pytest.approx(np.sqrt(eta), abs=1e-3)


def test_eta_upper_examples():
    assert eta_upper_bound(identity_channel(2), 1) == pytest.approx(1, abs=1e-6)
    assert eta_upper_bound(gallery_depolarizing(1.0), 1) == pytest.approx(0, abs=1e-5)
    assert eta_upper_bound(gallery_amplitude_damping(0.3, 0.8), 1) == pytest.approx(0.894427, abs=1e-3)


def test_clipping_reported():
    r = solve_level(gallery_depolarizing(1.0))
    assert 0.0 <= r.eta_bound <= 1.0
    raw = 2 * r.psucc_bound - 1
    assert r.eta_clipped == (raw != r.eta_bound)


@pytest.mark.parametrize("k,d", [(2, 2), (2, 3), (3, 3)])
def test_identity_perfect_coding(k, d):
    r = solve_level(identity_channel(d), HierarchyLevelSpec(k=k, m=1))
    assert r.psucc_bound == pytest.approx(1, abs=1e-6)


def test_psucc_bound_range(rng):
    for k in (2, 3):
        r = solve_level(random_channel(2, 2, rng), HierarchyLevelSpec(k=k, m=1))
        assert 1 / k - 1e-7 <= r.psucc_bound <= 1 + 1e-7


@pytest.mark.parametrize("ch", [gallery_depolarizing(0.3), gallery_counterexample(3),
                                random_channel(2, 2, np.random.default_rng(1))])
def test_bilinear_equivalence(ch):
    rep = bilinear_form_check(ch)
    assert rep.equal, rep
    assert rep.forward_residual <= 1e-6 and rep.backward_residual <= 1e-6


@pytest.mark.slow
def test_soundness_against_seesaw():
    for ch in random_qubit_channels(50, seed=21):
        lower = psucc_seesaw(ch, 2, restarts=4).value
        assert solve_level(ch).psucc_bound >= lower - 1e-6


@pytest.mark.parametrize("ch", [gallery_depolarizing(0.3), gallery_amplitude_damping(0.2, 0.5),
                                gallery_amplitude_damping(0.7, 0.8), identity_channel(2)])
def test_monotone_in_level(ch):
    one = eta_upper_bound(ch, 1)
    assert eta_upper_bound(ch, 2) <= one + 1e-6


def test_monotone_counterexample():
    ch = gallery_counterexample(3)
    assert eta_upper_bound(ch, 2) <= eta_upper_bound(ch, 1) + 1e-6


@pytest.mark.parametrize("ch", random_qubit_channels(4, seed=9) + [gallery_counterexample(3)])
def test_ppt_dominance(ch):
    assert eta_upper_bound(ch, 1, ppt=True) <= eta_upper_bound(ch, 1) + 1e-6


@pytest.mark.parametrize("ppt", [False, True])
def test_symmetry_reduction_matches_unreduced(ppt):
    for ch in random_qubit_channels(2, seed=4):
        a = solve_level(ch, HierarchyLevelSpec(m=2, ppt=ppt, symmetry_reduction=True, **GENERAL))
        b = solve_level(ch, HierarchyLevelSpec(m=2, ppt=ppt, symmetry_reduction=False, **GENERAL))
        assert a.psucc_bound == pytest.approx(b.psucc_bound, abs=1e-6)


def test_output_sectors():
    ch = sectored_channel()
    J = choi(ch)
    assert [list(s) for s in output_sectors(J.matrix, 2, 3)] == [[0], [1, 2]]
    J = choi(gallery_depolarizing(0.3))
    assert len(output_sectors(J.matrix, 2, 2)) == 1
    J = choi(gallery_counterexample(3))
    assert len(output_sectors(J.matrix, 3, 3)) == 3


@pytest.mark.parametrize("m,ppt", [(1, False), (1, True), (2, False)])
def test_sectored_matches_general(m, ppt):
    ch = sectored_channel()
    a = solve_level(ch, HierarchyLevelSpec(m=m, ppt=ppt, dephase=False, sectors=True))
    b = solve_level(ch, HierarchyLevelSpec(m=m, ppt=ppt, **GENERAL))
    assert a.info["sectors"] == 2
    assert a.psucc_bound == pytest.approx(b.psucc_bound, abs=1e-6)


def test_sectored_solution_satisfies_logical_constraints():
    ch = sectored_channel()
    spec = HierarchyLevelSpec(m=2, dephase=False, sectors=True)
    from contracta.sdp import solve_checked
    prob, layout = build_sdp(ch, spec)
    sol = solve_checked(prob)
    blocks = logical_blocks(sol, layout, 2, 2)
    res = marginal_residuals(blocks, choi(ch).matrix, 2, 3, 2, 2)
    assert max(res.values()) <= 1e-6
    assert objective_value(blocks, choi(ch).matrix, 2, 3, 2, 2) == pytest.approx(sol.primal_value, abs=1e-6)


def test_dephased_matches_general():
    ch = gallery_counterexample(3)
    a = solve_level(ch, HierarchyLevelSpec(m=1, dephase=True))
    b = solve_level(ch, HierarchyLevelSpec(m=1, **GENERAL))
    assert a.info["dephased"] and not b.info["dephased"]
    assert a.psucc_bound == pytest.approx(b.psucc_bound, abs=1e-6)


def test_printed_first_marginal_range_is_inconsistent():
    # summing only l <= m < k forces tr_A W^(0, j) = tr_A W^(0, j) / k, hence W = 0
    from contracta.sdp import SolverError
    ch = gallery_depolarizing(0.3)
    with pytest.raises(SolverError):
        solve_level(ch, HierarchyLevelSpec(k=3, m=1, first_marginal_upto="m", **GENERAL))
    r = solve_level(ch, HierarchyLevelSpec(k=2, m=2, first_marginal_upto="m", **GENERAL))
    assert r.status == "optimal"


def test_spec_validation_and_budget():
    with pytest.raises(ValueError):
        build_sdp(identity_channel(2), HierarchyLevelSpec(k=1))
    with pytest.raises(ValueError):
        build_sdp(identity_channel(2), HierarchyLevelSpec(m=0))
    with pytest.raises(MemoryError):
        build_sdp(tensor_power(gallery_depolarizing(0.2), 2), HierarchyLevelSpec(m=3), budget=10 ** 5)


def test_certificate_attached():
    r = solve_level(gallery_amplitude_damping(0.4, 0.6))
    assert r.certificate.ok, r.certificate.flags
    assert r.certificate.relative_gap <= 1e-7
    assert all(len(k) == 2 for k in itertools.islice(product_point([np.eye(2) / 2] * 2, [np.eye(2)] * 2, 1), 2))
