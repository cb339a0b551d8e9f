"""Confusability graphs, operator subspaces and the eta_tr = 1 tests.

A channel has ``eta_tr = 1`` exactly when the orthogonal complement of its
confusability graph ``G = span{K_i* K_j}`` contains a rank-one matrix,
equivalently when ``l_SEP(J(Phi* o Phi)) = 0``.  This module builds the
objects on both sides of that equivalence and searches for witnesses.

Rank-one matrices are parametrized as ``x = u v*``; with the row-major
``vec`` this is ``vec(x) = u (x) conj(v)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .channels import KrausChannel, _matrix_from_json, apply, matrix_to_json
from .linalg import (herm_to_real, hermitian_basis, operator_norm, proj,
                     random_unit_vector, real_to_herm, sqrtm_psd, trace_norm)
from .sdp import SdpOptions, SdpProblem, certify, solve_checked

RANK_TOL = 1e-10
RANK_ONE_TOL = 1e-7


@dataclass
class OperatorSubspace:
    """Subspace of ``C^{p x q}`` given by a Hilbert-Schmidt orthonormal basis."""
    p: int
    q: int
    basis: np.ndarray  # (r, p, q)
    hermitian: bool = False

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=complex).reshape(-1, self.p, self.q)
        self.basis = B
        V = B.reshape(len(B), self.p * self.q)
        G = V.conj() @ V.T
        if len(B) and np.abs(G - np.eye(len(B))).max() > 1e-10:
            raise ValueError("basis is not orthonormal")
        if self.hermitian and not self.is_self_adjoint():
            raise ValueError("subspace flagged Hermitian is not closed under adjoint")

    @classmethod
    def span(cls, mats, p: int | None = None, q: int | None = None, tol: float = RANK_TOL) -> "OperatorSubspace":
        mats = np.asarray(mats, dtype=complex)
        if mats.ndim == 2:
            mats = mats[None]
        if p is None:
            p, q = mats.shape[1], mats.shape[2]
        V = mats.reshape(len(mats), p * q)
        if len(V) == 0:
            return cls(p, q, np.zeros((0, p, q)))
        _, s, Vh = np.linalg.svd(V, full_matrices=False)
        r = int(np.sum(s > tol * max(1.0, s[0]))) if s.size and s[0] > 0 else 0
        return cls(p, q, Vh[:r].reshape(r, p, q))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def vecs(self) -> np.ndarray:
        return self.basis.reshape(self.dim, self.p * self.q)

    def projector(self) -> np.ndarray:
        V = self.vecs()
        return V.T @ V.conj()

    def project(self, X) -> np.ndarray:
        v = np.asarray(X).reshape(-1)
        return (self.projector() @ v).reshape(self.p, self.q)

    def distance(self, X) -> float:
        X = np.asarray(X)
        return float(np.linalg.norm(X - self.project(X)))

    def contains(self, X, tol: float = 1e-8) -> bool:
        return self.distance(X) <= tol * max(1.0, float(np.linalg.norm(X)))

    def adjoint(self) -> "OperatorSubspace":
        return OperatorSubspace(self.q, self.p, np.conj(np.swapaxes(self.basis, 1, 2)))

    def is_self_adjoint(self, tol: float = 1e-8) -> bool:
        if self.p != self.q:
            return False
        return all(self.contains(b.conj().T, tol) for b in self.basis)

    def hermitian_basis(self) -> np.ndarray:
        """Orthonormal Hermitian basis of a self-adjoint subspace."""
        if not self.is_self_adjoint():
            raise ValueError("subspace is not self-adjoint")
        cands = []
        for b in self.basis:
            cands.append((b + b.conj().T) / 2)
            cands.append((b - b.conj().T) / 2j)
        R = herm_to_real(np.array(cands))
        _, s, Vh = np.linalg.svd(R, full_matrices=False)
        r = int(np.sum(s > RANK_TOL * max(1.0, s[0])))
        return real_to_herm(Vh[:r], self.p)


def subspace_distance(S1: OperatorSubspace, S2: OperatorSubspace) -> float:
    """Operator-norm distance between the orthogonal projectors."""
    return operator_norm(S1.projector() - S2.projector())


def full_space(p: int, q: int) -> OperatorSubspace:
    return OperatorSubspace(p, q, np.eye(p * q).reshape(p * q, p, q))


def orthogonal_complement(S: OperatorSubspace) -> OperatorSubspace:
    n = S.p * S.q
    if S.dim == 0:
        return full_space(S.p, S.q)
    # null space of the conjugated rows: vectors w with <b, w> = 0 for all b
    _, s, Vh = np.linalg.svd(S.vecs().conj(), full_matrices=True)
    r = int(np.sum(s > RANK_TOL))
    comp = Vh[r:].conj()
    return OperatorSubspace(S.p, S.q, comp.reshape(n - r, S.p, S.q))


def confusability_graph(ch: KrausChannel) -> OperatorSubspace:
    K = ch.stacked()
    prods = np.einsum("iba,jbc->ijac", K.conj(), K).reshape(-1, ch.d_in, ch.d_in)
    S = OperatorSubspace.span(prods)
    S.hermitian = S.is_self_adjoint()
    return S


# ---------------------------------------------------------------- operator system -> channel


def channel_from_operator_system(S: OperatorSubspace, shift: float = 2.0) -> KrausChannel:
    """Channel whose confusability graph is ``S`` (self-adjoint, containing I).

    Takes an orthonormal Hermitian basis ``M_1..M_{d-1}`` of the traceless
    part of ``S`` and forms the positive basis
    ``N_i = (M_i + shift ||M_i|| I)/c``, ``c = (1 + shift) sum_i ||M_i||``,
    completed by ``N_0 = I - sum_i N_i``.  With ``K_i = (e_i (x) I) sqrt(N_i)``
    one gets ``K_i* K_j = delta_ij N_i``, so the graph is ``span{N_i} = S``.
    For ``shift > 1`` every ``N_i`` with ``i >= 1`` is invertible.
    """
    if shift < 1:
        raise ValueError("shift must be at least 1")
    n = S.p
    if not S.is_self_adjoint():
        raise ValueError("subspace is not self-adjoint")
    if not S.contains(np.eye(n)):
        raise ValueError("subspace does not contain the identity")
    H = S.hermitian_basis()
    H0 = H - np.einsum("kii->k", H)[:, None, None] * np.eye(n) / n
    R = herm_to_real(H0)
    _, sv, Vh = np.linalg.svd(R, full_matrices=False)
    r = int(np.sum(sv > RANK_TOL * max(1.0, sv[0]))) if sv.size else 0
    M = real_to_herm(Vh[:r], n) if r else np.zeros((0, n, n))
    norms = np.array([operator_norm(x) for x in M])
    N = [np.eye(n, dtype=complex)]
    if r:
        c = float((1 + shift) * norms.sum())
        N = [(x + shift * nm * np.eye(n)) / c for x, nm in zip(M, norms)]
        N.insert(0, np.eye(n) - sum(N))
    d = len(N)
    ks = []
    for i, Ni in enumerate(N):
        K = np.zeros((d * n, n), dtype=complex)
        K[i * n:(i + 1) * n] = sqrtm_psd(Ni)
        ks.append(K)
    return KrausChannel(n, d * n, tuple(ks))


def planted_operator_system(n: int, r: int, rng: np.random.Generator) -> tuple[OperatorSubspace, np.ndarray]:
    """Operator system ``span{I, H_1..H_r}`` whose complement contains ``u v*``.

    Each random Hermitian ``H`` is corrected by ``-c uv* - conj(c) vu*`` with
    ``c = u* H v``, which keeps it Hermitian and makes it orthogonal to ``uv*``.
    """
    u = random_unit_vector(n, rng)
    v = random_unit_vector(n, rng)
    v = v - np.vdot(u, v) * u
    v /= np.linalg.norm(v)
    mats = [np.eye(n, dtype=complex)]
    for _ in range(r):
        G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        H = (G + G.conj().T) / 2
        c = np.vdot(u, H @ v)
        mats.append(H - c * np.outer(u, v.conj()) - np.conj(c) * np.outer(v, u.conj()))
    S = OperatorSubspace.span(np.array(mats))
    S.hermitian = True
    return S, np.outer(u, v.conj())


# ---------------------------------------------------------------- projector -> subspace


def kernel_subspace_from_projector(Pi, n: int | None = None, m: int | None = None) -> OperatorSubspace:
    """``S = vec^{-1}(ker Pi)`` inside ``C^{n x m}`` for a projector on ``C^n (x) C^m``."""
    Pi = np.asarray(Pi, dtype=complex)
    N = Pi.shape[0]
    if n is None:
        n = int(round(np.sqrt(N)))
        m = n
    if n * m != N:
        raise ValueError("projector dimension does not match n * m")
    if np.abs(Pi - Pi.conj().T).max() > 1e-8 or np.abs(Pi @ Pi - Pi).max() > 1e-8:
        raise ValueError("input is not an orthogonal projector")
    w, V = np.linalg.eigh((Pi + Pi.conj().T) / 2)
    K = V[:, w < 0.5].T
    return OperatorSubspace(n, m, K.reshape(-1, n, m))


def random_projector(N: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.normal(size=(N, rank)) + 1j * rng.normal(size=(N, rank))
    Q, _ = np.linalg.qr(G)
    return Q @ Q.conj().T


# ---------------------------------------------------------------- hat extension


def hat_extension(S: OperatorSubspace) -> tuple[OperatorSubspace, OperatorSubspace]:
    """``S_hat = {[[0, A], [B*, 0]] : A, B in S}`` and a Hermitian basis of its complement."""
    n, m = S.p, S.q
    N = n + m
    r2 = 1 / np.sqrt(2)
    hat = []
    for b in S.basis:
        X = np.zeros((N, N), dtype=complex)
        X[:n, n:] = b
        hat.append(X)
        Y = np.zeros((N, N), dtype=complex)
        Y[n:, :n] = b.conj().T
        hat.append(Y)
    S_hat = OperatorSubspace(N, N, np.array(hat).reshape(-1, N, N))
    perp = []
    for h in hermitian_basis(n):
        X = np.zeros((N, N), dtype=complex)
        X[:n, :n] = h
        perp.append(X)
    for h in hermitian_basis(m):
        X = np.zeros((N, N), dtype=complex)
        X[n:, n:] = h
        perp.append(X)
    comp = orthogonal_complement(S)
    for s in comp.basis:
        X = np.zeros((N, N), dtype=complex)
        X[:n, n:] = r2 * s
        X[n:, :n] = r2 * s.conj().T
        perp.append(X)
    for s in comp.basis:
        X = np.zeros((N, N), dtype=complex)
        X[:n, n:] = 1j * r2 * s
        X[n:, :n] = -1j * r2 * s.conj().T
        perp.append(X)
    S_perp = OperatorSubspace(N, N, np.array(perp), hermitian=True)
    return S_hat, S_perp


@dataclass
class SandwichSample:
    dist_hat: float
    dist_small: float
    ok: bool


def hat_sandwich_point(S: OperatorSubspace, S_hat: OperatorSubspace, X: np.ndarray,
                       C: float = 2.0) -> SandwichSample:
    """Pointwise form of the two-sided comparison for a unit rank-one ``X``.

    Builds the matrix the proof extracts from the larger off-diagonal block
    (``b/||b||`` or ``c*/||c||``) and checks ``dist(x, S) <= C dist(X, S_hat)``.
    """
    n = S.p
    delta = S_hat.distance(X)
    b, c = X[:n, n:], X[n:, :n]
    if delta >= 0.5:
        x = None
        small = 1.0 if S.dim == 0 else min(1.0, _any_rank_one_distance(S))
    else:
        x = b / np.linalg.norm(b) if np.linalg.norm(b) >= np.linalg.norm(c) else c.conj().T / np.linalg.norm(c)
        small = S.distance(x)
        if np.linalg.matrix_rank(x, tol=1e-10) > 1:
            return SandwichSample(delta, small, False)
    return SandwichSample(delta, small, small <= C * delta + 1e-12)


def _any_rank_one_distance(S: OperatorSubspace) -> float:
    x = np.zeros((S.p, S.q), dtype=complex)
    x[0, 0] = 1.0
    return S.distance(x)


def embed_top_right(S: OperatorSubspace, x: np.ndarray) -> np.ndarray:
    n, m = S.p, S.q
    X = np.zeros((n + m, n + m), dtype=complex)
    X[:n, n:] = x
    return X


# ---------------------------------------------------------------- rank-one search


@dataclass
class RankOneSearchResult:
    distance: float
    u: np.ndarray
    v: np.ndarray
    converged: bool

    @property
    def witness(self) -> np.ndarray:
        return np.outer(self.u, self.v.conj())


def rank_one_distance(S: OperatorSubspace, restarts: int = 16, iters: int = 500,
                      seed: int = 0, tol: float = 1e-13) -> RankOneSearchResult:
    """Upper bound on ``min ||P_{S^perp}(u v*)||`` over unit ``u, v`` by alternation."""
    p, q = S.p, S.q
    P = np.eye(p * q) - S.projector()
    P = (P + P.conj().T) / 2
    T = P.reshape(p, q, p, q)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        u = random_unit_vector(p, rng)
        v = random_unit_vector(q, rng)
        prev = np.inf
        conv = False
        for _ in range(iters):
            vb = v.conj()
            Qu = np.einsum("j,ijkl,l->ik", vb.conj(), T, vb)
            w, V = np.linalg.eigh((Qu + Qu.conj().T) / 2)
            u = V[:, 0]
            Qv = np.einsum("i,ijkl,k->jl", u.conj(), T, u)
            w, V = np.linalg.eigh((Qv + Qv.conj().T) / 2)
            v = V[:, 0].conj()
            val = max(float(w[0]), 0.0)
            if prev - val <= tol:
                conv = True
                break
            prev = val
        d = S.distance(np.outer(u, v.conj()))
        if d > 0:
            # alternation stalls at degenerate zeros; Gauss-Newton on the residual does not
            u2, v2 = _polish_rank_one(np.eye(p * q) - P, p, q, u, v)
            d2 = S.distance(np.outer(u2, v2.conj()))
            if d2 < d:
                u, v, d = u2, v2, d2
        if best is None or d < best.distance:
            best = RankOneSearchResult(d, u, v, conv)
    return best


def _polish_rank_one(Pc: np.ndarray, p: int, q: int, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares refinement of ``(u, v)`` for the residual ``P_{S^perp} vec(u v*)``."""
    Pp = np.eye(p * q) - Pc

    def split(z):
        return z[:p] + 1j * z[p:2 * p], z[2 * p:2 * p + q] + 1j * z[2 * p + q:]

    def res(z):
        a, b = split(z)
        r = Pp @ np.kron(a, b.conj()) / (np.linalg.norm(a) * np.linalg.norm(b))
        return np.concatenate([r.real, r.imag])

    z0 = np.concatenate([u.real, u.imag, v.real, v.imag])
    sol = least_squares(res, z0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=500)
    a, b = split(sol.x)
    return a / np.linalg.norm(a), b / np.linalg.norm(b)


# ---------------------------------------------------------------- l_SEP


def l_sep_upper(A, dims: tuple[int, int], restarts: int = 16, iters: int = 500,
                seed: int = 0, tol: float = 1e-13) -> tuple[float, np.ndarray, np.ndarray]:
    """See-saw over product vectors: an upper bound on ``l_SEP(A)``."""
    A = np.asarray(A, dtype=complex)
    dA, dB = dims
    T = A.reshape(dA, dB, dA, dB)
    rng = np.random.default_rng(seed)
    best = (np.inf, None, None)
    for _ in range(max(1, restarts)):
        u = random_unit_vector(dA, rng)
        v = random_unit_vector(dB, rng)
        prev = np.inf
        for _ in range(iters):
            Mu = np.einsum("j,ijkl,l->ik", v.conj(), T, v)
            u = np.linalg.eigh((Mu + Mu.conj().T) / 2)[1][:, 0]
            Mv = np.einsum("i,ijkl,k->jl", u.conj(), T, u)
            w, V = np.linalg.eigh((Mv + Mv.conj().T) / 2)
            v = V[:, 0]
            val = float(w[0])
            if prev - val <= tol:
                break
            prev = val
        val = float(np.vdot(np.kron(u, v), A @ np.kron(u, v)).real)
        if val < best[0]:
            best = (val, u, v)
    return best


def l_sep_lower_ppt(A, dims: tuple[int, int], options: SdpOptions | None = None) -> float:
    """``min <A, X>`` over PPT states: a lower bound on ``l_SEP(A)``."""
    A = np.asarray(A, dtype=complex)
    A = (A + A.conj().T) / 2
    dA, dB = dims
    D = dA * dB
    prob = SdpProblem()
    x = prob.add_block("X", D)
    y = prob.add_block("XTB", D)
    prob.set_objective(x, -A)
    prob.add_constraints({x: np.eye(D)[None]}, [1.0])
    H = hermitian_basis(D)
    HT = H.reshape(-1, dA, dB, dA, dB).transpose(0, 1, 4, 3, 2).reshape(-1, D, D)
    prob.add_constraints({y: H, x: -HT}, np.zeros(len(H)))
    sol = solve_checked(prob, options)
    cert = certify(sol, prob)
    zmin = min(0.0, cert.dual_min_eig)
    return float(-(sol.dual_value - 2 * zmin))


def composed_choi(ch: KrausChannel) -> np.ndarray:
    """Unit-trace Choi matrix of the linear map ``Phi* o Phi`` (Kraus ``K_i* K_j``)."""
    K = ch.stacked()
    prods = np.einsum("iba,jbc->ijac", K.conj(), K).reshape(-1, ch.d_in, ch.d_in)
    d = ch.d_in
    V = np.transpose(prods, (0, 2, 1)).reshape(len(prods), d * d)
    J = V.T @ V.conj()
    J = (J + J.conj().T) / 2
    return J / np.trace(J).real


@dataclass
class EtaOneReport:
    verdict: str
    rank_one_distance: float
    complement_dim: int
    witness_u: np.ndarray | None
    witness_v: np.ndarray | None
    witness_trace_distance: float | None
    lsep_upper: float
    lsep_lower_ppt: float | None
    seesaw_lower: float
    sdp_upper: float | None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "rank_one_distance": self.rank_one_distance,
            "complement_dim": self.complement_dim,
            "witness_trace_distance": self.witness_trace_distance,
            "lsep_upper": self.lsep_upper,
            "lsep_lower_ppt": self.lsep_lower_ppt,
            "seesaw_lower": self.seesaw_lower,
            "sdp_upper": self.sdp_upper,
        }


CERTIFIED_ONE = "eta=1 certified"
CERTIFIED_BELOW = "eta<1 evidence"
INCONCLUSIVE = "inconclusive"


def eta_one_report(ch: KrausChannel, restarts: int = 16, seed: int = 0, sdp_level: int = 0,
                   ppt_max_dim: int = 36) -> EtaOneReport:
    """Witness search for ``eta_tr = 1`` together with bounds pointing the other way.

    ``sdp_level`` runs hierarchy levels ``1..sdp_level`` (k = 2), stopping at the
    first bound below 1.  ``η<1`` is certified by an empty complement, a
    positive PPT lower bound on ``l_SEP``, or an SDP bound below 1.
    """
    from .hierarchy import eta_upper_bound
    from .lower_bounds import seesaw_eta
    G = confusability_graph(ch)
    comp = orthogonal_complement(G)
    if comp.dim:
        r1 = rank_one_distance(comp, restarts, seed=seed)
        dist = r1.distance
    else:
        r1, dist = None, 1.0
    wu = wv = None
    wdist = None
    if r1 is not None and dist <= RANK_ONE_TOL:
        # u v* in G^perp means K_i u and K_j v are orthogonal for all i, j
        wu = r1.u / np.linalg.norm(r1.u)
        wv = r1.v / np.linalg.norm(r1.v)
        wdist = trace_norm(apply(ch, proj(wu)) - apply(ch, proj(wv)))
    Jc = composed_choi(ch)
    up = l_sep_upper(Jc, (ch.d_in, ch.d_in), restarts, seed=seed)[0]
    low = l_sep_lower_ppt(Jc, (ch.d_in, ch.d_in)) if ch.d_in ** 2 <= ppt_max_dim else None
    see = seesaw_eta(ch, restarts=restarts, seed=seed).value
    sdp_up = None
    for m in range(1, sdp_level + 1):
        try:
            b = eta_upper_bound(ch, m)
        except MemoryError:
            break
        sdp_up = b if sdp_up is None else min(sdp_up, b)
        if sdp_up < 1 - 1e-6:
            break
    if wdist is not None and wdist >= 2 - 1e-6:
        verdict = CERTIFIED_ONE
    elif comp.dim == 0 or (low is not None and low > 1e-7) or (sdp_up is not None and sdp_up < 1 - 1e-6):
        verdict = CERTIFIED_BELOW
    else:
        verdict = INCONCLUSIVE
    return EtaOneReport(verdict, dist, comp.dim, wu, wv, wdist, up, low, see, sdp_up)


def eta_one_report_subspace(S: OperatorSubspace, **kw) -> EtaOneReport:
    """Report for the channel built from the operator system ``S``."""
    return eta_one_report(channel_from_operator_system(S), **kw)


# ---------------------------------------------------------------- JSON


def subspace_from_dict(obj: dict) -> OperatorSubspace:
    p, q = int(obj["p"]), int(obj["q"])
    mats = [_matrix_from_json(M) for M in obj["basis"]]
    if not mats:
        return OperatorSubspace(p, q, np.zeros((0, p, q)))
    S = OperatorSubspace.span(np.array(mats), p, q)
    S.hermitian = p == q and S.is_self_adjoint()
    return S


def subspace_to_dict(S: OperatorSubspace) -> dict:
    return {"p": S.p, "q": S.q, "basis": [matrix_to_json(b) for b in S.basis]}


def load_subspace(path) -> OperatorSubspace:
    return subspace_from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "OperatorSubspace", "subspace_distance", "full_space", "orthogonal_complement",
    "confusability_graph", "channel_from_operator_system", "planted_operator_system",
    "kernel_subspace_from_projector", "random_projector", "hat_extension", "hat_sandwich_point",
    "embed_top_right", "RankOneSearchResult", "rank_one_distance", "l_sep_upper",
    "l_sep_lower_ppt", "composed_choi", "EtaOneReport", "eta_one_report",
    "eta_one_report_subspace", "CERTIFIED_ONE", "CERTIFIED_BELOW", "INCONCLUSIVE", "subspace_from_dict", "subspace_to_dict", "load_subspace",
]
