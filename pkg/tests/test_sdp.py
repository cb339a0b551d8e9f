import numpy as np
import pytest
from hypothesis import given, strategies as st

from contracta.linalg import hermitian_basis, random_hermitian
from contracta.sdp import (
    FREE, SdpOptions, SdpProblem, certify, embed_hermitian, read_sdpa, solve, solve_checked,
    unembed_hermitian, write_sdpa,
)

seeds = st.integers(0, 2 ** 32 - 1)


def trace_problem(C):
    p = SdpProblem()
    b = p.add_block("X", C.shape[0])
    p.set_objective(b, C)
    p.add_constraints({b: np.eye(C.shape[0])}, [1.0])
    return p


def random_feasible_problem(g, n=3, extra=2):
    """Random objective with a trace row and constraints satisfied by I/n."""
    p = trace_problem(random_hermitian(n, g))
    for _ in range(extra):
        A = random_hermitian(n, g)
        p.add_constraints({0: A}, [np.trace(A).real / n])
    return p


def test_trace_only_value():
    sol = solve(trace_problem(np.eye(2)))
    assert sol.optimal
    assert sol.primal_value == pytest.approx(1, abs=1e-8)


def test_top_eigenvalue_diag():
    sol = solve(trace_problem(np.diag([1.0, -1.0])))
    assert sol.dual_value == pytest.approx(1, abs=1e-8)
    assert np.allclose(sol.X[0], np.diag([1, 0]), atol=1e-6)


def test_two_by_two_against_grid():
    # brute force over pure states on a Bloch sphere grid
    g = np.random.default_rng(3)
    C = random_hermitian(2, g)
    th, ph = np.meshgrid(np.linspace(0, np.pi, 401), np.linspace(0, 2 * np.pi, 401))
    v = np.stack([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)])
    vals = np.einsum("i...,ij,j...->...", v.conj(), C, v).real
    sol = solve(trace_problem(C))
    assert sol.dual_value >= vals.max() - 1e-9
    assert sol.dual_value == pytest.approx(vals.max(), abs=1e-4)


@given(seeds, st.integers(1, 6))
def test_top_eigenvalue_oracle(seed, n):
    C = random_hermitian(n, np.random.default_rng(seed))
    sol = solve(trace_problem(C))
    top = np.linalg.eigvalsh(C)[-1]
    assert sol.optimal
    assert abs(sol.dual_value - top) <= 1e-7
    assert sol.relative_gap <= 1e-7


@given(seeds, st.floats(0.1, 50.0))
def test_scaling_invariance(seed, c):
    g = np.random.default_rng(seed)
    p1 = random_feasible_problem(g)
    p2 = SdpProblem()
    p2.add_block("X", 3)
    p2.set_objective(0, c * p1.objective[0])
    for coeffs, rhs in p1._chunks:
        p2.add_constraints(coeffs, rhs)
    v1, v2 = solve(p1).dual_value, solve(p2).dual_value
    assert abs(v2 - c * v1) <= 1e-8 * max(1.0, abs(c * v1))


@given(seeds, st.integers(1, 200))
def test_weak_duality_every_iterate(seed, iters):
    g = np.random.default_rng(seed)
    p = random_feasible_problem(g)
    sol = solve(p, SdpOptions(max_iters=iters))
    cert = certify(sol, p)
    assert cert.weak_duality


def test_certificate_contract_on_optimal(rng):
    p = random_feasible_problem(rng, n=4, extra=3)
    sol = solve(p)
    cert = certify(sol, p)
    assert sol.optimal and cert.ok, cert.flags
    assert cert.primal_min_eig >= -1e-8 and cert.dual_min_eig >= -1e-8
    assert cert.relative_gap == pytest.approx(sol.relative_gap, abs=1e-9)


def test_certify_flags_perturbed_point(rng):
    p = random_feasible_problem(rng)
    sol = solve(p)
    sol.X[0] = sol.X[0] + 0.01 * np.eye(3)
    assert "primal-residual" in certify(sol, p).flags


def test_dependent_rows_removed(rng):
    p = random_feasible_problem(rng)
    A = random_hermitian(3, rng)
    p.add_constraints({0: A}, [np.trace(A).real / 3])
    p.add_constraints({0: 2 * A}, [2 * np.trace(A).real / 3])
    sol = solve(p)
    assert sol.optimal
    assert sol.info["rows_used"] == p.n_constraints - 1


def test_free_block_equality():
    # max -x  s.t.  x - tr(X) = 0, tr(X) = 2  ->  -2
    p = SdpProblem()
    X = p.add_block("X", 2)
    x = p.add_block("x", 1, FREE)
    p.set_objective(x, [-1.0])
    p.add_constraints({X: -np.eye(2), x: [1.0]}, [0.0])
    p.add_constraints({X: np.eye(2)}, [2.0])
    sol = solve(p)
    assert sol.optimal
    assert sol.dual_value == pytest.approx(-2, abs=1e-7)


def test_embedding_doubles_spectrum(rng):
    H = random_hermitian(3, rng)
    p = SdpProblem()
    p.add_block("X", 3)
    p.set_objective(0, H)
    R = embed_hermitian(p).objective[0] * 2
    assert R.shape == (6, 6)
    assert np.allclose(np.sort(np.linalg.eigvalsh(R)), np.sort(np.repeat(np.linalg.eigvalsh(H), 2)))
    assert np.allclose(unembed_hermitian(R), H)


def test_embedding_identity_block():
    p = SdpProblem()
    p.add_block("X", 2)
    p.set_objective(0, np.eye(2))
    assert embed_hermitian(p).blocks[0].dim == 4


@given(seeds)
def test_embedding_preserves_value(seed):
    g = np.random.default_rng(seed)
    p = random_feasible_problem(g)
    # both values are within the solver gap tolerance of the optimum
    assert solve(embed_hermitian(p)).dual_value == pytest.approx(solve(p).dual_value, abs=1e-8)


def test_sdpa_roundtrip(tmp_path, rng):
    p = random_feasible_problem(rng)
    path = tmp_path / "p.dat-s"
    write_sdpa(p, path)
    q = read_sdpa(path)
    assert solve(q).dual_value == pytest.approx(solve(p).dual_value, abs=1e-8)


def test_doeblin_program_value():
    from contracta.channels import gallery_depolarizing
    from contracta.doeblin import doeblin_alpha
    assert doeblin_alpha(gallery_depolarizing(0.5)).alpha == pytest.approx(0.5, abs=1e-7)


def test_bad_inputs():
    p = SdpProblem()
    with pytest.raises(ValueError):
        p.add_block("X", 0)
    b = p.add_block("X", 2)
    with pytest.raises(ValueError):
        p.add_constraints({b: np.eye(3)}, [1.0])
    with pytest.raises(ValueError):
        p.set_objective(b, np.eye(3))


def test_solve_checked_deterministic(rng):
    p = random_feasible_problem(rng, n=4)
    a, b = solve_checked(p), solve_checked(p)
    assert abs(a.dual_value - b.dual_value) <= 1e-12
    assert hermitian_basis(2).shape == (4, 2, 2)


def test_degenerate_scaling_returns_best_iterate():
    # this instance stalls near a 2e-9 gap and then its scaling overflows
    g = np.random.default_rng(24281)
    p1 = random_feasible_problem(g)
    p2 = SdpProblem()
    p2.add_block("X", 3)
    p2.set_objective(0, 45.0 * p1.objective[0])
    for coeffs, rhs in p1._chunks:
        p2.add_constraints(coeffs, rhs)
    sol = solve(p2)
    assert sol.relative_gap <= 1e-8
    assert sol.dual_value == pytest.approx(45.0 * solve(p1).dual_value, rel=1e-8)
