"""Heuristic lower bounds on eta_tr and P_succ by alternating ascent.

``eta_tr(Phi)`` is the maximum over orthonormal pairs ``u, v`` of
``(1/2)||Phi(uu* - vv*)||_1``, and also the maximum over ``||X|| <= 1`` of
``(1/2)(lambda_max - lambda_min)(Phi*(X))``.  Alternating between the two
forms never decreases the objective; every returned value is recomputed
from the final witness states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import KrausChannel, adjoint_apply, apply
from .linalg import (check_density, check_hermitian, hermitian_basis, hermitian_sign, proj,
                     random_density, random_orthonormal_pair, trace_norm)
from .sdp import SdpOptions, SdpProblem, solve_checked

DEFAULT_RESTARTS = 32
DEFAULT_ITERS = 200
DEFAULT_TOL = 1e-10


@dataclass
class SeesawWitness:
    u: np.ndarray
    v: np.ndarray
    X: np.ndarray
    value: float
    iterations: int
    restarts: int
    history: list = field(default_factory=list)


def helstrom_value(ch: KrausChannel, rho1, rho2) -> float:
    """Optimal two-state discrimination probability after the channel."""
    rho1, rho2 = check_density(rho1), check_density(rho2)
    return 0.5 + 0.25 * trace_norm(apply(ch, rho1) - apply(ch, rho2))


def dual_eigen_gap(ch: KrausChannel, X) -> float:
    X = check_hermitian(X)
    if np.linalg.norm(X, 2) > 1 + 1e-10:
        raise ValueError("X must have operator norm at most 1")
    w = np.linalg.eigvalsh(adjoint_apply(ch, X))
    return 0.5 * float(w[-1] - w[0])


def _extreme_pair(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    w, V = np.linalg.eigh((A + A.conj().T) / 2)
    return V[:, -1].copy(), V[:, 0].copy(), 0.5 * float(w[-1] - w[0])


def pair_value(ch: KrausChannel, u, v) -> float:
    """``(1/2)||Phi(uu*) - Phi(vv*)||_1`` recomputed from scratch."""
    return 0.5 * trace_norm(apply(ch, proj(u)) - apply(ch, proj(v)))


def _seesaw_run(ch: KrausChannel, u, v, max_iters: int, tol: float, keep_history: bool):
    hist = []
    best = -np.inf
    X = None
    it = 0
    for it in range(1, max_iters + 1):
        D = apply(ch, proj(u) - proj(v))
        X = hermitian_sign(D)
        val_x = 0.5 * float(np.vdot(D, X).real)
        u, v, val_uv = _extreme_pair(adjoint_apply(ch, X))
        if keep_history:
            hist.extend([val_x, val_uv])
        if val_uv - best <= tol:
            best = max(best, val_uv)
            break
        best = val_uv
    return u, v, X, it, hist


def seesaw_eta(ch: KrausChannel, restarts: int = DEFAULT_RESTARTS, max_iters: int = DEFAULT_ITERS,
               tol: float = DEFAULT_TOL, seed: int = 0, keep_history: bool = False) -> SeesawWitness:
    """Best see-saw value over Haar-random orthonormal starting pairs."""
    rng = np.random.default_rng(seed)
    best = None
    for r in range(max(1, restarts)):
        u0, v0 = random_orthonormal_pair(ch.d_in, rng)
        u, v, X, its, hist = _seesaw_run(ch, u0, v0, max_iters, tol, keep_history)
        val = pair_value(ch, u, v)
        if best is None or val > best.value:
            best = SeesawWitness(u, v, X, val, its, r + 1, hist)
    best.restarts = max(1, restarts)
    return best


def verify_witness(ch: KrausChannel, w: SeesawWitness, tol: float = 1e-9) -> bool:
    """Independent check of a see-saw witness using only linalg primitives."""
    if abs(np.linalg.norm(w.u) - 1) > tol or abs(np.linalg.norm(w.v) - 1) > tol:
        return False
    if abs(np.vdot(w.u, w.v)) > 1e-8:
        return False
    return abs(pair_value(ch, w.u, w.v) - w.value) <= tol


# ---------------------------------------------------------------- k messages


@dataclass
class PsuccResult:
    value: float
    states: list
    povm: list
    completeness_residual: float


def _fix_povm(M: list[np.ndarray]) -> list[np.ndarray]:
    """Project onto PSD and renormalize so the elements sum to the identity."""
    out = []
    for Mi in M:
        w, V = np.linalg.eigh((Mi + Mi.conj().T) / 2)
        out.append((V * np.clip(w, 0, None)) @ V.conj().T)
    S = sum(out)
    w, V = np.linalg.eigh(S)
    Sinv = (V / np.sqrt(np.clip(w, 1e-300, None))) @ V.conj().T
    return [Sinv @ Mi @ Sinv for Mi in out]


def optimal_povm(outputs: list[np.ndarray], options: SdpOptions | None = None) -> list[np.ndarray]:
    """POVM maximizing ``(1/k) sum tr(M_i sigma_i)`` for fixed output states."""
    k = len(outputs)
    d = outputs[0].shape[0]
    if k == 2:
        P = hermitian_sign(outputs[0] - outputs[1])
        return [(np.eye(d) + P) / 2, (np.eye(d) - P) / 2]
    prob = SdpProblem()
    blocks = [prob.add_block(f"M{i}", d) for i in range(k)]
    for b, s in zip(blocks, outputs):
        prob.set_objective(b, s / k)
    H = hermitian_basis(d)
    prob.add_constraints({b: H for b in blocks}, np.real(np.einsum("nii->n", H)))
    sol = solve_checked(prob, options)
    return _fix_povm([sol.X[b] for b in blocks])


def psucc_value(ch: KrausChannel, states: list, povm: list) -> float:
    k = len(states)
    return float(sum(np.vdot(M, apply(ch, rho)).real for M, rho in zip(povm, states)) / k)


def psucc_seesaw(ch: KrausChannel, k: int = 2, restarts: int = DEFAULT_RESTARTS,
                 max_iters: int = DEFAULT_ITERS, tol: float = DEFAULT_TOL, seed: int = 0) -> PsuccResult:
    """Lower bound on ``P_succ(Phi, k)`` from a feasible (states, POVM) pair.

    Alternates: states fixed gives the optimal measurement (Helstrom
    projectors for ``k = 2``, a small SDP otherwise); measurement fixed gives
    each state as a top eigenvector of ``Phi*(M_i)``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        if k == 2:
            u, v = random_orthonormal_pair(ch.d_in, rng)
            states = [proj(u), proj(v)]
        else:
            states = [random_density(ch.d_in, rng, rank=1) for _ in range(k)]
        prev = -np.inf
        povm = None
        for _ in range(max_iters):
            povm = optimal_povm([apply(ch, r) for r in states])
            states = []
            for M in povm:
                w, V = np.linalg.eigh(adjoint_apply(ch, M))
                states.append(proj(V[:, -1]))
            val = psucc_value(ch, states, povm)
            if val - prev <= tol:
                break
            prev = val
        povm = optimal_povm([apply(ch, r) for r in states])
        val = psucc_value(ch, states, povm)
        if best is None or val > best.value:
            res = float(np.abs(sum(povm) - np.eye(ch.d_out)).max())
            best = PsuccResult(val, states, povm, res)
    return best


# ---------------------------------------------------------------- mixed-pair sampling


@dataclass
class RuskaiReport:
    samples: int
    max_ratio: float
    pure_value: float
    violations: int


def ruskai_sample_check(ch: KrausChannel, samples: int = 200, seed: int = 0,
                        witness: SeesawWitness | None = None) -> RuskaiReport:
    """Sampled contraction ratios of mixed pairs against the pure-pair value."""
    rng = np.random.default_rng(seed)
    if witness is None:
        witness = seesaw_eta(ch, seed=seed)
    best = witness.value
    worst, bad = 0.0, 0
    for _ in range(samples):
        rho = random_density(ch.d_in, rng)
        sigma = random_density(ch.d_in, rng)
        den = trace_norm(rho - sigma)
        if den < 1e-12:
            continue
        r = trace_norm(apply(ch, rho) - apply(ch, sigma)) / den
        worst = max(worst, r)
        if r > best + 1e-6:
            bad += 1
    return RuskaiReport(samples, worst, best, bad)


__all__ = [
    "SeesawWitness", "helstrom_value", "dual_eigen_gap", "seesaw_eta", "verify_witness",
    "pair_value", "psucc_seesaw", "PsuccResult", "optimal_povm", "psucc_value",
    "ruskai_sample_check", "RuskaiReport",
]
