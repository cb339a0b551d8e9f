"""SDP hierarchy of upper bounds on the k-message success probability.

Level ``m`` uses one PSD operator ``W^{(i, j_1..j_m)}`` on ``A (x) B^m``
(tensor order ``A, B_1, ..., B_m``) per index tuple in ``[k]^{m+1}``, with
constraints

* total trace ``k d_B^m``;
* covariance ``W^{(i, j o pi)} = U^pi W^{(i, j)} U^pi*`` under permutations of
  ``B_1..B_m`` (output slot ``p`` carries input slot ``pi(p)``);
* last-system marginal ``sum_j W^{(i, j' j)} = sum_j tr_{B_m} W^{(i, j' j)} (x) I/d_B``;
* first-system marginal ``tr_A W^{(i, j)} = (1/k) sum_l tr_A W^{(l, j)}``;
* optionally PPT: ``T_S W >= 0`` for ``S = A, B_1, B_1B_2, ..., B_1..B_{m-1}``.

Product points ``rho_i^T (x) M_{j_1} (x) ... (x) M_{j_m}`` are feasible, so the
optimum bounds ``P_succ`` from above.  The reported bound is the dual value,
inflated by the dual slack's worst negative eigenvalue times the total
primal trace, which makes it valid regardless of solver accuracy.

Two exact reductions keep the programs small:

* symmetry reduction stores one block per multiset ``{j_1..j_m}``;
  other blocks are permuted copies, and blocks whose multiset is fixed by a
  transposition are constrained to be invariant under it;
* when every output of the channel is diagonal (``J`` invariant under
  dephasing of ``B``), a twirl over diagonal unitaries shows one may take
  every ``W`` diagonal on ``B^m``; then each block splits into ``d_A x d_A``
  pieces and the PPT constraints hold automatically.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .channels import KrausChannel, choi, is_classical_output
from .linalg import herm_to_real, hermitian_basis, partial_trace, real_to_herm
from .sdp import FREE, PSD, SdpOptions, SdpProblem, SdpSolution, certify, solve_checked

MEMORY_BUDGET = 10 ** 7


@dataclass(frozen=True)
class HierarchyLevelSpec:
    k: int = 2
    m: int = 1
    ppt: bool = False
    symmetry_reduction: bool = True
    dephase: bool | None = None  # None: detect classical outputs automatically
    sectors: bool | None = None  # None: use output flag sectors when there are several
    first_marginal_upto: str = "k"  # "m" reproduces the printed summation range

    def validate(self) -> None:
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.m < 1:
            raise ValueError("level m must be at least 1")
        if self.first_marginal_upto not in ("k", "m"):
            raise ValueError("first_marginal_upto must be 'k' or 'm'")


@dataclass
class HierarchyResult:
    psucc_bound: float
    eta_bound: float | None
    eta_clipped: bool
    spec: HierarchyLevelSpec
    status: str
    primal_value: float
    dual_value: float
    dual_min_eig: float
    certificate: object
    n_blocks: int
    n_constraints: int
    seconds: float
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------- batched helpers


def _batch_permute(Hs: np.ndarray, dims: tuple[int, ...], perm: list[int]) -> np.ndarray:
    n = len(dims)
    N, D = Hs.shape[0], Hs.shape[1]
    T = Hs.reshape((N,) + dims + dims)
    T = T.transpose([0] + [1 + p for p in perm] + [1 + n + p for p in perm])
    return T.reshape(N, D, D)


def _batch_ptranspose(Hs: np.ndarray, dims: tuple[int, ...], subs) -> np.ndarray:
    n = len(dims)
    N, D = Hs.shape[0], Hs.shape[1]
    T = Hs.reshape((N,) + dims + dims)
    axes = list(range(1 + 2 * n))
    for s in subs:
        axes[1 + s], axes[1 + n + s] = axes[1 + n + s], axes[1 + s]
    return T.transpose(axes).reshape(N, D, D)


def _traceless_basis(d: int) -> np.ndarray:
    H = hermitian_basis(d)
    diag = np.zeros((d - 1, d, d), dtype=complex)
    for p in range(d - 1):
        diag[p, p, p] = 1 / np.sqrt(2)
        diag[p, p + 1, p + 1] = -1 / np.sqrt(2)
    return np.concatenate([diag, H[d:]])


def _kron_batch(Hs: np.ndarray, Ks: np.ndarray) -> np.ndarray:
    """All products ``H (x) K`` for ``H`` in ``Hs`` and ``K`` in ``Ks``."""
    a, b = Hs.shape[1], Ks.shape[1]
    out = np.einsum("pij,qkl->pqikjl", Hs, Ks)
    return out.reshape(Hs.shape[0] * Ks.shape[0], a * b, a * b)


def _swap_rows(dims: tuple[int, ...], sw: list[int]) -> np.ndarray:
    """Orthonormal Hermitian test operators for ``X = U X U*`` (``U`` permutes systems)."""
    D = int(np.prod(dims))
    HD = hermitian_basis(D)
    R = herm_to_real(HD - _batch_permute(HD, dims, sw))
    _, sv, Vh = np.linalg.svd(R, full_matrices=False)
    r = int(np.sum(sv > 1e-9))
    return real_to_herm(Vh[:r], D)


def _inverse(perm) -> list[int]:
    inv = [0] * len(perm)
    for p, q in enumerate(perm):
        inv[q] = p
    return inv


def _acc(coeffs: dict, block: int, arr: np.ndarray) -> None:
    if block in coeffs:
        coeffs[block] = coeffs[block] + arr
    else:
        coeffs[block] = arr


# ---------------------------------------------------------------- builder


@dataclass
class _Layout:
    """Where each logical ``W^{(i,j)}`` lives in the solver problem."""
    dims: tuple[int, ...]
    block_of: dict  # (i, j) -> block index
    perm_of: dict  # (i, j) -> system permutation from the stored block, or None
    ppt_subsets: list
    total_trace: float
    dephased: bool = False
    sub_of: dict = field(default_factory=dict)
    sectors: list | None = None


def _check_budget(spec: HierarchyLevelSpec, d_A: int, d_B: int, budget: int) -> None:
    D = d_A * d_B ** spec.m
    mult = 1 + (spec.m if spec.ppt else 0)
    size = spec.k ** (spec.m + 1) * D * D * mult
    if size > budget:
        raise MemoryError(f"level spec needs {size} matrix entries, budget is {budget}")


def build_sdp(ch: KrausChannel, spec: HierarchyLevelSpec,
              budget: int = MEMORY_BUDGET) -> tuple[SdpProblem, _Layout]:
    """Solver problem for ``SDP_m(Phi, k)`` and the map from indices to blocks."""
    spec.validate()
    J = choi(ch)
    d_A, d_B = J.d_A, J.d_B
    dephase = spec.dephase
    if dephase is None:
        dephase = is_classical_output(ch)
    if dephase:
        _check_budget(spec, d_A, 1, budget)
        return _build_dephased(J.matrix, d_A, d_B, spec)
    use_sectors = spec.sectors
    if use_sectors is None:
        use_sectors = spec.symmetry_reduction
    if use_sectors:
        sec = output_sectors(J.matrix, d_A, d_B)
        if len(sec) > 1:
            _check_budget(spec, d_A, max(len(x) for x in sec), budget)
            return _build_sectored(J.matrix, d_A, d_B, sec, spec)
    _check_budget(spec, d_A, d_B, budget)
    return _build_general(J.matrix, d_A, d_B, spec)


def output_sectors(J: np.ndarray, d_A: int, d_B: int, tol: float = 1e-12) -> list[np.ndarray]:
    """Finest partition of the output basis with no Choi coherence across parts.

    ``J`` is then invariant under independent phases on the parts, so every
    hierarchy variable may be taken block diagonal over them.
    """
    T = np.abs(J.reshape(d_A, d_B, d_A, d_B)).max(axis=(0, 2)) > tol
    parent = list(range(d_B))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(*np.nonzero(T)):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for b in range(d_B):
        groups.setdefault(find(b), []).append(b)
    return [np.array(g) for g in sorted(groups.values())]


def _ppt_subsets(m: int) -> list[list[int]]:
    return [[0]] + [list(range(1, p + 1)) for p in range(1, m)]


def _build_general(J: np.ndarray, d_A: int, d_B: int, spec: HierarchyLevelSpec):
    k, m = spec.k, spec.m
    dims = (d_A,) + (d_B,) * m
    D = d_A * d_B ** m
    prob = SdpProblem()
    block_of, perm_of = {}, {}
    reps = {}
    for i in range(k):
        for j in itertools.product(range(k), repeat=m):
            if spec.symmetry_reduction:
                s = tuple(sorted(j))
                if (i, s) not in reps:
                    reps[(i, s)] = prob.add_block(f"W{i}|{''.join(map(str, s))}", D)
                block_of[(i, j)] = reps[(i, s)]
                order = sorted(range(m), key=lambda p: j[p])  # s[q] = j[order[q]]
                pi = _inverse(order)  # j[p] = s[pi[p]]
                perm_of[(i, j)] = None if list(j) == list(s) else [0] + [1 + q for q in pi]
            else:
                block_of[(i, j)] = prob.add_block(f"W{i}|{''.join(map(str, j))}", D)
                perm_of[(i, j)] = None

    def to_block(key, Hs):
        """Coefficients on the stored block of ``W^key`` for test operators ``Hs``."""
        perm = perm_of[key]
        if perm is None:
            return Hs
        return _batch_permute(Hs, dims, _inverse(perm))

    subsets = _ppt_subsets(m) if spec.ppt else []
    n_sub = len(subsets)
    total_trace = k * d_B ** m * (1 + n_sub)

    # Objective.
    scale = d_A / (k * d_B ** (m - 1))
    JI = np.kron(J, np.eye(d_B ** (m - 1)))[None]
    C = {}
    for i in range(k):
        for rest in itertools.product(range(k), repeat=m - 1):
            key = (i, (i,) + rest)
            _acc(C, block_of[key], scale * to_block(key, JI)[0])
    for b, Cb in C.items():
        prob.set_objective(b, Cb)

    # Normalization.
    norm = {}
    for key in block_of:
        _acc(norm, block_of[key], np.eye(D)[None])
    prob.add_constraints(norm, [k * d_B ** m])

    HD = hermitian_basis(D)

    # Permutation covariance.
    if m > 1:
        if spec.symmetry_reduction:
            for (i, s), b in reps.items():
                for p in range(m - 1):
                    if s[p] == s[p + 1]:
                        sw = list(range(m + 1))
                        sw[p + 1], sw[p + 2] = sw[p + 2], sw[p + 1]
                        T = _swap_rows(dims, sw)
                        prob.add_constraints({b: T}, np.zeros(len(T)))
        else:
            for (i, j), b in block_of.items():
                for p in range(m - 1):
                    jt = list(j)
                    jt[p], jt[p + 1] = jt[p + 1], jt[p]
                    jt = tuple(jt)
                    if jt < j:
                        continue
                    sw = list(range(m + 1))
                    sw[p + 1], sw[p + 2] = sw[p + 2], sw[p + 1]
                    # W^{jt} - U W^{j} U* = 0, tested against HD
                    coeffs = {}
                    _acc(coeffs, block_of[(i, jt)], HD)
                    _acc(coeffs, b, -_batch_permute(HD, dims, sw))
                    prob.add_constraints(coeffs, np.zeros(len(HD)))

    # Last-system marginal: test against X (x) T with T traceless on B_m.
    Hlast = _kron_batch(hermitian_basis(D // d_B), _traceless_basis(d_B))
    for i in range(k):
        for jp in itertools.product(range(k), repeat=m - 1):
            coeffs = {}
            for j in range(k):
                key = (i, jp + (j,))
                _acc(coeffs, block_of[key], to_block(key, Hlast))
            prob.add_constraints(coeffs, np.zeros(len(Hlast)))

    # First-system marginal.
    upto = k if spec.first_marginal_upto == "k" else min(m, k)
    HB = hermitian_basis(d_B ** m)
    IH = _kron_batch(np.eye(d_A)[None], HB)
    for j in itertools.product(range(k), repeat=m):
        for i in range(k - 1 if upto == k else k):
            coeffs = {}
            _acc(coeffs, block_of[(i, j)], to_block((i, j), IH))
            for l in range(upto):
                _acc(coeffs, block_of[(l, j)], -to_block((l, j), IH) / k)
            prob.add_constraints(coeffs, np.zeros(len(IH)))

    # PPT blocks, one per logical W and subset.
    for key, b in block_of.items():
        for S in subsets:
            v = prob.add_block(f"T{''.join(map(str, S))}W{key}", D)
            coeffs = {v: HD}
            _acc(coeffs, b, -to_block(key, _batch_ptranspose(HD, dims, S)))
            prob.add_constraints(coeffs, np.zeros(len(HD)))

    layout = _Layout(dims, block_of, perm_of, subsets, float(total_trace))
    return prob, layout


def _build_dephased(J: np.ndarray, d_A: int, d_B: int, spec: HierarchyLevelSpec):
    """Program restricted to operators diagonal on ``B^m`` (exact for classical outputs)."""
    k, m = spec.k, spec.m
    prob = SdpProblem()
    # Variables X^{(i,j)}_b; permutation covariance identifies (j o pi, b o pi) with (j, b).
    var = {}
    rep_block = {}
    for i in range(k):
        for j in itertools.product(range(k), repeat=m):
            for b in itertools.product(range(d_B), repeat=m):
                if spec.symmetry_reduction or m == 1:
                    pairs = sorted(zip(j, b))
                    rep = (i, tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))
                else:
                    rep = (i, j, b)
                if rep not in rep_block:
                    rep_block[rep] = prob.add_block(f"X{rep}", d_A)
                var[(i, j, b)] = rep_block[rep]
    if not (spec.symmetry_reduction or m == 1):
        HA = hermitian_basis(d_A)
        for (i, j, b), blk in var.items():
            for p in range(m - 1):
                jt, bt = list(j), list(b)
                jt[p], jt[p + 1] = jt[p + 1], jt[p]
                bt[p], bt[p + 1] = bt[p + 1], bt[p]
                other = var[(i, tuple(jt), tuple(bt))]
                if other > blk:
                    prob.add_constraints({blk: HA, other: -HA}, np.zeros(len(HA)))

    Jt = J.reshape(d_A, d_B, d_A, d_B)
    Jb = [Jt[:, b, :, b] for b in range(d_B)]
    scale = d_A / (k * d_B ** (m - 1))
    C = {}
    for i in range(k):
        for rest in itertools.product(range(k), repeat=m - 1):
            j = (i,) + rest
            for b in itertools.product(range(d_B), repeat=m):
                _acc(C, var[(i, j, b)], scale * Jb[b[0]])
    for blk, Cb in C.items():
        prob.set_objective(blk, Cb)

    norm = {}
    for blk in var.values():
        _acc(norm, blk, np.eye(d_A)[None])
    prob.add_constraints(norm, [k * d_B ** m])

    # Last-system marginal: for each (i, j', b', b) with b < d_B - 1,
    # sum_j X_{(b', b)} - (1/d_B) sum_j sum_c X_{(b', c)} = 0.
    HA = hermitian_basis(d_A)
    for i in range(k):
        for jp in itertools.product(range(k), repeat=m - 1):
            for bp in itertools.product(range(d_B), repeat=m - 1):
                for bl in range(d_B - 1):
                    coeffs = {}
                    for j in range(k):
                        for c in range(d_B):
                            w = (1.0 if c == bl else 0.0) - 1.0 / d_B
                            _acc(coeffs, var[(i, jp + (j,), bp + (c,))], w * HA)
                    prob.add_constraints(coeffs, np.zeros(len(HA)))

    # First-system marginal (scalar rows, tr_A is diagonal on B).
    upto = k if spec.first_marginal_upto == "k" else min(m, k)
    I1 = np.eye(d_A)[None]
    for j in itertools.product(range(k), repeat=m):
        for b in itertools.product(range(d_B), repeat=m):
            for i in range(k - 1 if upto == k else k):
                coeffs = {}
                _acc(coeffs, var[(i, j, b)], I1)
                for l in range(upto):
                    _acc(coeffs, var[(l, j, b)], -I1 / k)
                prob.add_constraints(coeffs, [0.0])

    layout = _Layout((d_A,) + (d_B,) * m, {}, {}, [], float(k * d_B ** m), True, var)
    return prob, layout


def _build_sectored(J: np.ndarray, d_A: int, d_B: int, sectors: list, spec: HierarchyLevelSpec):
    """Program restricted to operators block diagonal over output sectors on each ``B``.

    Exact when ``J`` has no coherence across sectors (phase twirl per sector);
    the twirl commutes with partial transposes, so PPT blocks split as well.
    A variable ``X^{(i,j),s}`` lives on ``A (x) B_{s_1} (x) ... (x) B_{s_m}``;
    simultaneous permutations of the pairs ``(j_p, s_p)`` are identified.
    """
    k, m = spec.k, spec.m
    nf = len(sectors)
    q = [len(x) for x in sectors]
    prob = SdpProblem()

    def sdims(sig):
        return (d_A,) + tuple(q[t] for t in sig)

    var, rep_block = {}, {}
    for i in range(k):
        for j in itertools.product(range(k), repeat=m):
            for sig in itertools.product(range(nf), repeat=m):
                pairs = list(zip(j, sig))
                order = sorted(range(m), key=lambda p: pairs[p])  # rep slot r = logical slot order[r]
                rep = (i, tuple(j[o] for o in order), tuple(sig[o] for o in order))
                if rep not in rep_block:
                    rep_block[rep] = prob.add_block(f"X{rep}", int(np.prod(sdims(rep[2]))))
                perm = None if order == sorted(order) else [0] + [1 + o for o in order]
                var[(i, j, sig)] = (rep_block[rep], perm)

    def to_block(key, Hs):
        _, perm = var[key]
        if perm is None:
            return Hs
        return _batch_permute(Hs, sdims(key[2]), perm)

    subsets = _ppt_subsets(m) if spec.ppt else []
    total_trace = k * d_B ** m * (1 + len(subsets))

    Jt = J.reshape(d_A, d_B, d_A, d_B)
    Js = [Jt[:, x][:, :, :, x].reshape(d_A * len(x), d_A * len(x)) for x in sectors]
    scale = d_A / (k * d_B ** (m - 1))
    C = {}
    for i in range(k):
        for rest in itertools.product(range(k), repeat=m - 1):
            j = (i,) + rest
            for sig in itertools.product(range(nf), repeat=m):
                other = int(np.prod([q[t] for t in sig[1:]]))
                key = (i, j, sig)
                _acc(C, var[key][0], scale * to_block(key, np.kron(Js[sig[0]], np.eye(other))[None])[0])
    for blk, Cb in C.items():
        prob.set_objective(blk, Cb)

    norm = {}
    for blk in rep_block.values():
        size = prob.blocks[blk].dim
        mult = sum(1 for v in var.values() if v[0] == blk)
        _acc(norm, blk, mult * np.eye(size)[None])
    prob.add_constraints(norm, [k * d_B ** m])

    # Stabilizer: representatives with equal adjacent pairs are swap invariant.
    for (i, jr, sr), blk in rep_block.items():
        dims = sdims(sr)
        for p in range(m - 1):
            if (jr[p], sr[p]) == (jr[p + 1], sr[p + 1]):
                sw = list(range(m + 1))
                sw[p + 1], sw[p + 2] = sw[p + 2], sw[p + 1]
                T = _swap_rows(dims, sw)
                prob.add_constraints({blk: T}, np.zeros(len(T)))

    # Last-system marginal.  With Y_s = sum_j X^{(i, j' j), (s', s)}:
    # Y_s = (sum_t tr_{B_m} Y_t) (x) I_{q_s} / d_B.
    for i in range(k):
        for jp in itertools.product(range(k), repeat=m - 1):
            for sp in itertools.product(range(nf), repeat=m - 1):
                Hh = hermitian_basis(d_A * int(np.prod([q[t] for t in sp])))
                for s_ in range(nf):
                    if q[s_] > 1:
                        HT = _kron_batch(Hh, _traceless_basis(q[s_]))
                        coeffs = {}
                        for j in range(k):
                            key = (i, jp + (j,), sp + (s_,))
                            _acc(coeffs, var[key][0], to_block(key, HT))
                        prob.add_constraints(coeffs, np.zeros(len(HT)))
                for s_ in range(nf - 1):
                    coeffs = {}
                    for t in range(nf):
                        w = (1.0 if t == s_ else 0.0) - q[s_] / d_B
                        if w == 0:
                            continue
                        HI = _kron_batch(Hh, np.eye(q[t])[None])
                        for j in range(k):
                            key = (i, jp + (j,), sp + (t,))
                            _acc(coeffs, var[key][0], w * to_block(key, HI))
                    prob.add_constraints(coeffs, np.zeros(len(Hh)))

    # First-system marginal; permuted copies follow by conjugation, so only
    # pair-sorted (j, s) are imposed.
    upto = k if spec.first_marginal_upto == "k" else min(m, k)
    for j in itertools.product(range(k), repeat=m):
        for sig in itertools.product(range(nf), repeat=m):
            if list(zip(j, sig)) != sorted(zip(j, sig)):
                continue
            IH = _kron_batch(np.eye(d_A)[None], hermitian_basis(int(np.prod([q[t] for t in sig]))))
            for i in range(k - 1 if upto == k else k):
                coeffs = {}
                _acc(coeffs, var[(i, j, sig)][0], to_block((i, j, sig), IH))
                for l in range(upto):
                    _acc(coeffs, var[(l, j, sig)][0], -to_block((l, j, sig), IH) / k)
                prob.add_constraints(coeffs, np.zeros(len(IH)))

    for key, (blk, _) in var.items():
        dims = sdims(key[2])
        D = int(np.prod(dims))
        HD = hermitian_basis(D)
        for S in subsets:
            v = prob.add_block(f"T{''.join(map(str, S))}X{key}", D)
            coeffs = {v: HD}
            _acc(coeffs, blk, -to_block(key, _batch_ptranspose(HD, dims, S)))
            prob.add_constraints(coeffs, np.zeros(len(HD)))

    layout = _Layout((d_A,) + (d_B,) * m, {}, {}, subsets, float(total_trace), False, var,
                     [np.asarray(x) for x in sectors])
    return prob, layout


# ---------------------------------------------------------------- solving


def logical_blocks(sol: SdpSolution, layout: _Layout, k: int, m: int) -> dict:
    """Reassemble every ``W^{(i,j)}`` from a solution."""
    out = {}
    if layout.sectors is not None:
        d_A, d_B = layout.dims[0], layout.dims[1]
        D = d_A * d_B ** m
        sec = layout.sectors
        for i in range(k):
            for j in itertools.product(range(k), repeat=m):
                W = np.zeros((D, D), dtype=complex)
                for sig in itertools.product(range(len(sec)), repeat=m):
                    blk, perm = layout.sub_of[(i, j, sig)]
                    X = sol.X[blk]
                    dims = (d_A,) + tuple(len(sec[t]) for t in sig)
                    if perm is not None:
                        X = _batch_permute(X[None], tuple(dims[p] for p in perm), _inverse(perm))[0]
                    grids = np.meshgrid(np.arange(d_A), *[sec[t] for t in sig], indexing="ij")
                    flat = np.ravel_multi_index(tuple(g.ravel() for g in grids), (d_A,) + (d_B,) * m)
                    W[np.ix_(flat, flat)] = X
                out[(i, j)] = W
        return out
    if layout.dephased:
        d_A = layout.dims[0]
        d_B = layout.dims[1]
        D = d_A * d_B ** m
        for i in range(k):
            for j in itertools.product(range(k), repeat=m):
                W = np.zeros((d_A, d_B ** m, d_A, d_B ** m), dtype=complex)
                for bi, b in enumerate(itertools.product(range(d_B), repeat=m)):
                    W[:, bi, :, bi] = sol.X[layout.sub_of[(i, j, b)]]
                out[(i, j)] = W.reshape(D, D)
        return out
    for key, b in layout.block_of.items():
        W = sol.X[b]
        perm = layout.perm_of[key]
        if perm is not None:
            W = _batch_permute(W[None], layout.dims, perm)[0]
        out[key] = W
    return out


def solve_level(ch: KrausChannel, spec: HierarchyLevelSpec | None = None,
                options: SdpOptions | None = None, budget: int = MEMORY_BUDGET) -> HierarchyResult:
    spec = spec or HierarchyLevelSpec()
    t0 = time.perf_counter()
    prob, layout = build_sdp(ch, spec, budget)
    sol = solve_checked(prob, options)
    cert = certify(sol, prob)
    zmin = min(0.0, cert.dual_min_eig)
    bound = sol.dual_value - zmin * layout.total_trace
    eta, clipped = None, False
    if spec.k == 2:
        raw = 2 * bound - 1
        eta = min(1.0, max(0.0, raw))
        clipped = eta != raw
    return HierarchyResult(bound, eta, clipped, spec, sol.status, sol.primal_value,
                           sol.dual_value, cert.dual_min_eig, cert, len(prob.blocks),
                           prob.n_constraints, time.perf_counter() - t0,
                           info={"dephased": layout.dephased,
                                 "sectors": None if layout.sectors is None else len(layout.sectors),
                                 "real_arithmetic": sol.info.get("real_arithmetic"),
                                 "iterations": sol.iterations})


def eta_upper_bound(ch: KrausChannel, m: int = 1, ppt: bool = False,
                    options: SdpOptions | None = None) -> float:
    return solve_level(ch, HierarchyLevelSpec(k=2, m=m, ppt=ppt), options).eta_bound


# ---------------------------------------------------------------- product points


def product_point(rhos, povm, m: int) -> dict:
    """Logical blocks ``rho_i^T (x) M_{j_1} (x) ... (x) M_{j_m}``."""
    k = len(rhos)
    out = {}
    for i in range(k):
        for j in itertools.product(range(k), repeat=m):
            W = rhos[i].T
            for jp in j:
                W = np.kron(W, povm[jp])
            out[(i, j)] = W
    return out


def logical_to_solver(blocks: dict, prob: SdpProblem, layout: _Layout, spec: HierarchyLevelSpec) -> list:
    """Solver variables for a point given in logical form (general layout only)."""
    if layout.dephased:
        raise ValueError("logical_to_solver supports the general layout only")
    X = [None] * len(prob.blocks)
    for key, b in layout.block_of.items():
        if layout.perm_of[key] is None:
            X[b] = blocks[key]
    for key, b in layout.block_of.items():
        for S, v in zip(layout.ppt_subsets, _ppt_blocks_of(prob, key)):
            perm_W = blocks[key]
            X[v] = _batch_ptranspose(perm_W[None], layout.dims, S)[0]
    return X


def _ppt_blocks_of(prob: SdpProblem, key) -> list[int]:
    tag = f"W{key}"
    return [n for n, blk in enumerate(prob.blocks) if blk.label.startswith("T") and blk.label.endswith(tag)]


# ---------------------------------------------------------------- bilinear form


@dataclass
class BilinearReport:
    sdp1_value: float
    tilde_value: float
    difference: float
    forward_residual: float
    forward_value_gap: float
    backward_residual: float
    backward_value_gap: float

    @property
    def equal(self) -> bool:
        return self.difference <= 1e-6


def _tilde_problem(J: np.ndarray, d_A: int, d_B: int, k: int, lifted: bool = True) -> SdpProblem:
    """Single-block program over ``W`` on ``Abar A Bbar B`` (level 1).

    With ``lifted`` the last-system constraint keeps ``A Abar``:
    ``tr_Bbar W = W_{Abar A} (x) I_B/d_B``.  Without it only the ``B Bbar``
    marginal is constrained, which is a strictly weaker program.
    """
    N = k * d_A * k * d_B
    Psi = np.zeros((k, k, k, k))
    for i in range(k):
        Psi[i, i, i, i] = 1.0  # Psi[i, j, i', j'] with (i, j) on (Abar, Bbar)
    Jt = J.reshape(d_A, d_B, d_A, d_B)
    C = np.einsum("abcd,ikjl->iakbjcld", Jt, Psi).reshape(N, N) * d_A * d_B
    prob = SdpProblem()
    w = prob.add_block("W", N)
    prob.set_objective(w, C)
    prob.add_constraints({w: np.eye(N)[None]}, [1.0])
    # tr_A W - I_Abar/k (x) tr_{Abar A} W = 0 on Abar Bbar B
    H = hermitian_basis(k * k * d_B).reshape(-1, k, k * d_B, k, k * d_B)
    lift_A = np.einsum("nxpyq,ac->nxapycq", H, np.eye(d_A)).reshape(-1, N, N)
    trAbar = np.einsum("nxpxq->npq", H)
    lift_rest = np.einsum("npq,xy,ac->nxapycq", trAbar, np.eye(k), np.eye(d_A)).reshape(-1, N, N)
    prob.add_constraints({w: lift_A - lift_rest / k}, np.zeros(len(H)))
    if lifted:
        # tr_Bbar W - W_{Abar A} (x) I_B/d_B = 0, tested against X (x) T, tr T = 0
        H2 = _kron_batch(hermitian_basis(k * d_A), _traceless_basis(d_B))
        H2 = H2.reshape(-1, k * d_A, d_B, k * d_A, d_B)
        lift = np.einsum("nsbtd,uv->nsubtvd", H2, np.eye(k)).reshape(-1, N, N)
        prob.add_constraints({w: lift}, np.zeros(len(lift)))
    else:
        # tr_{Abar A Bbar} W = I_B / d_B
        HB = hermitian_basis(d_B)
        lift = np.einsum("nbd,xy,ac,uv->nxaubycvd", HB, np.eye(k), np.eye(d_A), np.eye(k))
        prob.add_constraints({w: lift.reshape(-1, N, N)}, np.real(np.einsum("nii->n", HB)) / d_B)
    return prob


def _tilde_from_blocks(blocks: dict, k: int, d_A: int, d_B: int) -> np.ndarray:
    N = k * d_A * k * d_B
    T = np.zeros((k, d_A, k, d_B, k, d_A, k, d_B), dtype=complex)
    for (i, j), W in blocks.items():
        T[i, :, j[0], :, i, :, j[0], :] = W.reshape(d_A, d_B, d_A, d_B)
    return T.reshape(N, N) / (k * d_B)


def _blocks_from_tilde(Wt: np.ndarray, k: int, d_A: int, d_B: int) -> dict:
    T = Wt.reshape(k, d_A, k, d_B, k, d_A, k, d_B)
    return {(i, (j,)): T[i, :, j, :, i, :, j, :].reshape(d_A * d_B, d_A * d_B) * (k * d_B)
            for i in range(k) for j in range(k)}


def bilinear_form_check(ch: KrausChannel, k: int = 2, options: SdpOptions | None = None,
                        lifted: bool = True) -> BilinearReport:
    """Solve level 1 and its single-block reformulation and map solutions both ways."""
    spec = HierarchyLevelSpec(k=k, m=1, dephase=False, symmetry_reduction=False)
    J = choi(ch)
    d_A, d_B = J.d_A, J.d_B
    prob1, layout = build_sdp(ch, spec)
    sol1 = solve_checked(prob1, options)
    probt = _tilde_problem(J.matrix, d_A, d_B, k, lifted)
    solt = solve_checked(probt, options)

    blocks1 = logical_blocks(sol1, layout, k, 1)
    Wt = _tilde_from_blocks(blocks1, k, d_A, d_B)
    fres = float(np.abs(probt.apply_constraints([Wt]) - probt.rhs()).max())
    fgap = abs(probt.objective_value([Wt]) - sol1.primal_value)

    back = _blocks_from_tilde(solt.X[0], k, d_A, d_B)
    Xb = [back[key] for key in sorted(layout.block_of, key=layout.block_of.get)]
    bres = float(np.abs(prob1.apply_constraints(Xb) - prob1.rhs()).max())
    bgap = abs(prob1.objective_value(Xb) - solt.primal_value)
    return BilinearReport(sol1.dual_value, solt.dual_value, abs(sol1.dual_value - solt.dual_value),
                          fres, fgap, bres, bgap)


def marginal_residuals(blocks: dict, J: np.ndarray, d_A: int, d_B: int, k: int, m: int,
                       upto: str = "k") -> dict:
    """Residual of every hierarchy constraint for a point given in logical form."""
    dims = (d_A,) + (d_B,) * m
    res = {}
    res["normalization"] = abs(sum(np.trace(W).real for W in blocks.values()) - k * d_B ** m)
    perm_res = 0.0
    for (i, j), W in blocks.items():
        for pi in itertools.permutations(range(m)):
            jt = tuple(j[pi[p]] for p in range(m))
            U = _batch_permute(W[None], dims, [0] + [1 + q for q in pi])[0]
            perm_res = max(perm_res, float(np.abs(blocks[(i, jt)] - U).max()))
    res["permutation"] = perm_res
    last = 0.0
    for i in range(k):
        for jp in itertools.product(range(k), repeat=m - 1):
            S = sum(blocks[(i, jp + (j,))] for j in range(k))
            R = np.kron(partial_trace(S, dims, m), np.eye(d_B) / d_B)
            last = max(last, float(np.abs(S - R).max()))
    res["last_system"] = last
    L = k if upto == "k" else m
    first = 0.0
    for (i, j), W in blocks.items():
        lhs = partial_trace(W, dims, 0)
        rhs = sum(partial_trace(blocks[(l, j)], dims, 0) for l in range(min(L, k))) / k
        first = max(first, float(np.abs(lhs - rhs).max()))
    res["first_system"] = first
    return res


def objective_value(blocks: dict, J: np.ndarray, d_A: int, d_B: int, k: int, m: int) -> float:
    scale = d_A / (k * d_B ** (m - 1))
    JI = np.kron(J, np.eye(d_B ** (m - 1)))
    val = 0.0
    for i in range(k):
        for rest in itertools.product(range(k), repeat=m - 1):
            val += np.vdot(JI, blocks[(i, (i,) + rest)]).real
    return float(scale * val)


__all__ = [
    "HierarchyLevelSpec", "HierarchyResult", "build_sdp", "output_sectors", "solve_level", "eta_upper_bound",
    "bilinear_form_check", "BilinearReport", "product_point", "logical_blocks",
    "marginal_residuals", "objective_value", "MEMORY_BUDGET", "FREE", "PSD",
]
