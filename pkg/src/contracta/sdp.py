"""Dense primal-dual interior-point solver for small block SDPs.

Problems are stated as

    maximize    sum_b <C_b, X_b>
    subject to  sum_b <A_ib, X_b> = b_i        (i = 1..m)
                X_b >= 0  (Hermitian PSD)  or  X_b free real vector

with dual

    minimize    b^T y
    subject to  sum_i y_i A_ib - C_b = Z_b >= 0,   sum_i y_i a_if = c_f.

The solver is an infeasible-start path-following method using the
Nesterov-Todd scaling and Mehrotra's predictor-corrector.  Blocks are
handled in complex arithmetic unless every coefficient is real (or purely
imaginary with zero right-hand side), in which case the problem is solved
over real symmetric matrices, which is exact for such data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .linalg import herm_to_real

log = logging.getLogger(__name__)

PSD = "hermitian-psd"
FREE = "free-scalar"


class SolverError(RuntimeError):
    """Raised when a problem cannot be handed to the solver at all."""


@dataclass(frozen=True)
class Block:
    label: str
    dim: int
    kind: str = PSD


class SdpProblem:
    """Container for a block SDP in the primal (maximization) form above.

    Constraints are appended in batches with :meth:`add_constraints`; each
    batch supplies, for the blocks it touches, an array of coefficient
    matrices ``(r, n, n)`` (or ``(r, n)`` for free blocks) and ``r``
    right-hand sides.
    """

    def __init__(self) -> None:
        self.blocks: list[Block] = []
        self.objective: list[np.ndarray] = []
        self._chunks: list[tuple[dict[int, np.ndarray], np.ndarray]] = []
        self._m = 0

    # -- construction -------------------------------------------------------

    def add_block(self, label: str, dim: int, kind: str = PSD) -> int:
        if kind not in (PSD, FREE):
            raise ValueError(f"unknown block kind {kind!r}")
        if dim < 1:
            raise ValueError("block dimension must be positive")
        self.blocks.append(Block(label, int(dim), kind))
        if kind == PSD:
            self.objective.append(np.zeros((dim, dim)))
        else:
            self.objective.append(np.zeros(dim))
        return len(self.blocks) - 1

    def set_objective(self, block: int, C) -> None:
        C = np.asarray(C)
        if C.shape != self.objective[block].shape:
            raise ValueError(f"objective shape {C.shape} does not match block {block}")
        if self.blocks[block].kind == PSD:
            C = (C + C.conj().T) / 2
        else:
            C = np.real(C)
        self.objective[block] = C

    def add_constraints(self, coeffs: dict[int, np.ndarray], rhs) -> None:
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        r = rhs.shape[0]
        if r == 0:
            return
        clean: dict[int, np.ndarray] = {}
        for b, A in coeffs.items():
            blk = self.blocks[b]
            A = np.asarray(A)
            if blk.kind == PSD:
                if A.ndim == 2:
                    A = A[None]
                if A.shape != (r, blk.dim, blk.dim):
                    raise ValueError(f"coefficients for block {blk.label} have shape {A.shape}")
                A = (A + np.conj(np.swapaxes(A, 1, 2))) / 2
            else:
                if A.ndim == 1:
                    A = A[None]
                if A.shape != (r, blk.dim):
                    raise ValueError(f"coefficients for block {blk.label} have shape {A.shape}")
                A = np.real(A)
            clean[b] = A
        self._chunks.append((clean, rhs))
        self._m += r

    @property
    def n_constraints(self) -> int:
        return self._m

    def rhs(self) -> np.ndarray:
        if not self._chunks:
            return np.zeros(0)
        return np.concatenate([c[1] for c in self._chunks])

    def block_coefficients(self, b: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows touching block ``b`` and their coefficients."""
        rows, mats = [], []
        off = 0
        for coeffs, rhs in self._chunks:
            if b in coeffs:
                A = coeffs[b]
                flat = np.abs(A).reshape(A.shape[0], -1).max(axis=1)
                nz = np.nonzero(flat > 0)[0]
                rows.append(off + nz)
                mats.append(A[nz])
            off += rhs.shape[0]
        blk = self.blocks[b]
        shape = (0, blk.dim, blk.dim) if blk.kind == PSD else (0, blk.dim)
        if not rows:
            return np.zeros(0, dtype=int), np.zeros(shape)
        return np.concatenate(rows), np.concatenate(mats)

    def total_entries(self) -> int:
        return sum(b.dim * b.dim if b.kind == PSD else b.dim for b in self.blocks)

    # -- linear maps on candidate solutions ------------------------------

    def apply_constraints(self, X: Sequence[np.ndarray]) -> np.ndarray:
        out = np.zeros(self._m)
        for b in range(len(self.blocks)):
            rows, A = self.block_coefficients(b)
            if rows.size == 0:
                continue
            if self.blocks[b].kind == PSD:
                vals = np.tensordot(A.conj(), X[b], axes=([1, 2], [0, 1])).real
            else:
                vals = A @ np.real(X[b])
            np.add.at(out, rows, vals)
        return out

    def adjoint(self, y) -> list[np.ndarray]:
        y = np.asarray(y, dtype=float)
        out = []
        for b, blk in enumerate(self.blocks):
            rows, A = self.block_coefficients(b)
            if blk.kind == PSD:
                M = np.zeros((blk.dim, blk.dim), dtype=A.dtype if A.size else float)
                if rows.size:
                    M = np.tensordot(y[rows], A, axes=1)
                out.append((M + M.conj().T) / 2)
            else:
                v = np.zeros(blk.dim)
                if rows.size:
                    v = y[rows] @ A
                out.append(v)
        return out

    def objective_value(self, X: Sequence[np.ndarray]) -> float:
        val = 0.0
        for C, Xb in zip(self.objective, X):
            val += float(np.vdot(C, Xb).real)
        return val


@dataclass
class SdpOptions:
    gap_tol: float = 1e-9
    feas_tol: float = 1e-9
    max_iters: int = 200
    step_fraction: float = 0.98
    rank_tol: float = 1e-10
    verbose: bool = False


@dataclass
class SdpSolution:
    status: str
    X: list[np.ndarray]
    y: np.ndarray
    Z: list[np.ndarray]
    primal_value: float
    dual_value: float
    relative_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------- compilation


@dataclass
class _Compiled:
    real: bool
    psd: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]]  # (block, rows, A, C)
    free: list[tuple[int, np.ndarray, np.ndarray]]  # (block, A (m, nf), c)
    b: np.ndarray
    kept: np.ndarray  # original row index of each compiled row
    scale: np.ndarray  # compiled row = original row / scale


def _compile(problem: SdpProblem, rank_tol: float) -> _Compiled:
    m = problem.n_constraints
    b = problem.rhs()
    per_block = [problem.block_coefficients(k) for k in range(len(problem.blocks))]

    # Rows are either purely real or purely imaginary for all maps this
    # package builds; in that case the optimum can be taken real.
    re_mag = np.zeros(m)
    im_mag = np.zeros(m)
    for (rows, A), blk in zip(per_block, problem.blocks):
        if rows.size == 0:
            continue
        flat = A.reshape(A.shape[0], -1)
        np.maximum.at(re_mag, rows, np.abs(flat.real).max(axis=1))
        if np.iscomplexobj(A):
            np.maximum.at(im_mag, rows, np.abs(flat.imag).max(axis=1))
    obj_real = all(not np.iscomplexobj(C) or np.abs(C.imag).max(initial=0.0) < 1e-14
                   for C in problem.objective)
    pure = (np.minimum(re_mag, im_mag) < 1e-14)
    imag_rows = (im_mag >= 1e-14) & (re_mag < 1e-14)
    real = bool(obj_real and pure.all() and np.all(np.abs(b[imag_rows]) < 1e-14))

    keep = np.ones(m, dtype=bool)
    if real:
        keep &= ~imag_rows

    # Real coordinates of every row, used for scaling and rank detection.
    ri, ci, vals = [], [], []
    offset = 0
    for (rows, A), blk in zip(per_block, problem.blocks):
        if blk.kind == PSD:
            width = blk.dim * blk.dim
            coords = herm_to_real(A.real if real else A) if rows.size else None
        else:
            width = blk.dim
            coords = np.asarray(A, dtype=float) if rows.size else None
        if rows.size:
            r, c = np.nonzero(coords)
            ri.append(rows[r])
            ci.append(c + offset)
            vals.append(coords[r, c])
        offset += width
    if ri:
        G = sps.csr_matrix((np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))),
                           shape=(m, offset))
    else:
        G = sps.csr_matrix((m, offset))
    norms = np.sqrt(np.asarray(G.multiply(G).sum(axis=1)).ravel())
    zero = norms <= 1e-13
    if np.any(np.abs(b[zero & keep]) > 1e-9):
        raise SolverError("a constraint has zero coefficients but nonzero right-hand side")
    keep &= ~zero
    idx = np.nonzero(keep)[0]
    scale = norms[idx]
    bk = b[idx] / scale
    if idx.size:
        Gk = sps.diags(1 / scale) @ G[idx]
        gram = (Gk @ Gk.T).toarray()
        # pivoted Cholesky of the Gram matrix of unit rows; a pivot is the squared
        # distance of a row to the span of the rows chosen before it
        L, piv, rank, _ = sla.lapack.dpstrf(gram, lower=1, tol=max(rank_tol ** 2, 1e-12))
        piv = piv - 1
        sel = np.sort(piv[:rank])
        # Dropped rows must be consistent with the kept ones.
        if rank < idx.size:
            L11 = np.tril(L[:rank, :rank])
            cross = gram[np.ix_(piv[:rank], piv[rank:])]
            coef = sla.solve_triangular(L11.T, sla.solve_triangular(L11, cross, lower=True))
            incons = np.abs(coef.T @ bk[piv[:rank]] - bk[piv[rank:]]).max()
            if incons > 1e-6 * (1 + np.abs(bk).max()):
                raise SolverError(f"equality constraints are inconsistent (residual {incons:.2e})")
        idx, scale, bk = idx[sel], scale[sel], bk[sel]

    pos = -np.ones(m, dtype=int)
    pos[idx] = np.arange(idx.size)
    psd, free = [], []
    for k, ((rows, A), blk) in enumerate(zip(per_block, problem.blocks)):
        C = problem.objective[k]
        if rows.size:
            mask = pos[rows] >= 0
            r2 = pos[rows[mask]]
            A2 = A[mask]
            A2 = A2 / scale[r2].reshape((-1,) + (1,) * (A2.ndim - 1))
        else:
            r2 = rows
            A2 = A
        if blk.kind == PSD:
            if real:
                A2 = np.ascontiguousarray(np.real(A2))
                C = np.real(C)
            else:
                A2 = A2.astype(complex)
                C = C.astype(complex)
            psd.append((k, r2, A2, C))
        else:
            dense = np.zeros((idx.size, blk.dim))
            if r2.size:
                np.add.at(dense, r2, A2)
            free.append((k, dense, np.real(C)))
    return _Compiled(real, psd, free, bk, idx, scale)


# ---------------------------------------------------------------- the solver


def _factor(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``S = L L^*`` and ``L^{-1}``; falls back to an eigen-factor if needed."""
    try:
        L = np.linalg.cholesky(S)
        Linv = sla.solve_triangular(L, np.eye(S.shape[0]), lower=True)
        return L, Linv
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(S)
        w = np.maximum(w, 1e-300)
        L = V * np.sqrt(w)
        Linv = (V / np.sqrt(w)).conj().T
        return L, Linv


def _herm(M: np.ndarray) -> np.ndarray:
    return (M + M.conj().T) / 2


def _max_step(lam: np.ndarray, dT: np.ndarray) -> float:
    s = 1.0 / np.sqrt(lam)
    H = _herm(dT * s[:, None] * s[None, :])
    wmin = np.linalg.eigvalsh(H)[0]
    return math.inf if wmin >= 0 else -1.0 / wmin


def solve(problem: SdpProblem, options: SdpOptions | None = None) -> SdpSolution:
    """Solve ``problem``; never raises on slow convergence, see ``status``."""
    opts = options or SdpOptions()
    comp = _compile(problem, opts.rank_tol)
    m = comp.b.size
    dtype = float if comp.real else complex
    b = comp.b
    psd = comp.psd
    free = comp.free
    nf = sum(F.shape[1] for _, F, _ in free)
    Af = np.hstack([F for _, F, _ in free]) if free else np.zeros((m, 0))
    cf = np.concatenate([c for _, _, c in free]) if free else np.zeros(0)
    cf = -cf  # internal minimization of -objective
    c_psd = [-C for _, _, _, C in psd]
    n_tot = sum(A.shape[-1] for _, _, A, _ in psd) or 1

    def Aop(Xs, xf):
        out = Af @ xf if nf else np.zeros(m)
        for (_, rows, A, _), X in zip(psd, Xs):
            if rows.size:
                vals = np.tensordot(A.conj(), X, axes=([1, 2], [0, 1])).real if not comp.real \
                    else np.tensordot(A, X, axes=([1, 2], [0, 1]))
                np.add.at(out, rows, vals)
        return out

    def ATop(y):
        mats = []
        for _, rows, A, _ in psd:
            n = A.shape[-1]
            if rows.size:
                mats.append(_herm(np.tensordot(y[rows], A, axes=1).astype(dtype)))
            else:
                mats.append(np.zeros((n, n), dtype=dtype))
        return mats

    # Initial point (Toh-Todd-Tutuncu heuristic).
    X, Z = [], []
    for (_, rows, A, _), C in zip(psd, c_psd):
        n = A.shape[-1]
        normA = np.linalg.norm(A.reshape(A.shape[0], -1), axis=1) if rows.size else np.zeros(0)
        xi = max(10.0, math.sqrt(n))
        if rows.size:
            xi = max(xi, n * float(np.max((1 + np.abs(b[rows])) / (1 + normA))))
        eta = max(10.0, math.sqrt(n), float(np.linalg.norm(C)),
                  float(normA.max(initial=0.0)))
        X.append(xi * np.eye(n, dtype=dtype))
        Z.append(eta * np.eye(n, dtype=dtype))
    xf = np.zeros(nf)
    y = np.zeros(m)

    nb = 1.0 + np.linalg.norm(b)
    nc = 1.0 + math.sqrt(sum(np.linalg.norm(C) ** 2 for C in c_psd) + np.linalg.norm(cf) ** 2)

    status = "max-iterations"
    best = None
    it = 0
    history = []
    for it in range(opts.max_iters + 1):
        rp = b - Aop(X, xf)
        ATy = ATop(y)
        Rd = [C - Zb - Ab for C, Zb, Ab in zip(c_psd, Z, ATy)]
        rf = cf - Af.T @ y if nf else np.zeros(0)
        pobj = sum(float(np.vdot(C, Xb).real) for C, Xb in zip(c_psd, X)) + float(cf @ xf)
        dobj = float(b @ y)
        mu = sum(float(np.vdot(Xb, Zb).real) for Xb, Zb in zip(X, Z)) / n_tot
        pinf = np.linalg.norm(rp) / nb
        dinf = math.sqrt(sum(np.linalg.norm(R) ** 2 for R in Rd) + np.linalg.norm(rf) ** 2) / nc
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        merit = max(relgap, pinf, dinf)
        history.append((pobj, dobj, relgap, pinf, dinf))
        if best is None or merit <= best[0]:
            best = (merit, [x.copy() for x in X], xf.copy(), y.copy(), [z.copy() for z in Z])
        if opts.verbose:
            log.info("it %3d pobj %+.10e dobj %+.10e gap %.1e pinf %.1e dinf %.1e",
                     it, -pobj, -dobj, relgap, pinf, dinf)
        if relgap <= opts.gap_tol and pinf <= opts.feas_tol and dinf <= opts.feas_tol:
            status = "optimal"
            break
        if it == opts.max_iters:
            break

        # Nesterov-Todd scaling per block.
        scal = []
        try:
            for Xb, Zb in zip(X, Z):
                Lx, Lxi = _factor(Xb)
                Lz, _ = _factor(Zb)
                U, s, Vh = np.linalg.svd(Lz.conj().T @ Lx)
                Gm = (Lx @ Vh.conj().T) / np.sqrt(s)
                Gi = (np.sqrt(s)[:, None] * Vh) @ Lxi
                scal.append((Gm, Gi, s, Gm @ Gm.conj().T))
        except np.linalg.LinAlgError:
            status = "numerical-failure"
            break

        M = np.zeros((m, m))
        for (_, rows, A, _), (_, _, _, W) in zip(psd, scal):
            if not rows.size:
                continue
            T = W @ A @ W
            mb = rows.size
            Mb = (A.conj().reshape(mb, -1) @ T.reshape(mb, -1).T).real
            M[np.ix_(rows, rows)] += Mb
        M = (M + M.T) / 2

        try:
            if nf:
                K = np.block([[M, Af], [Af.T, np.zeros((nf, nf))]])
                lu = sla.lu_factor(K)
                lin = lambda r1, r2: np.split(sla.lu_solve(lu, np.concatenate([r1, r2])), [m])
            else:
                cho = sla.cho_factor(M + 1e-14 * np.trace(M) / max(m, 1) * np.eye(m))
                lin = lambda r1, r2: (sla.cho_solve(cho, r1), np.zeros(0))
        except (np.linalg.LinAlgError, sla.LinAlgError):
            status = "numerical-failure"
            break

        def direction(Rc):
            WRW = [Ws @ (Rdb) @ Ws for (_, _, _, Ws), Rdb in zip(scal, Rd)]
            r1 = rp - Aop([Rcb - w for Rcb, w in zip(Rc, WRW)], np.zeros(nf))
            dy, dxf = lin(r1, rf)
            dZ = [R - a for R, a in zip(Rd, ATop(dy))]
            dX = [_herm(Rcb - Ws @ dz @ Ws) for Rcb, (_, _, _, Ws), dz in zip(Rc, scal, dZ)]
            return dX, dxf, dy, dZ

        def steps(dX, dZ):
            ap, ad = math.inf, math.inf
            tX, tZ = [], []
            for (Gm, Gi, s, _), dx, dz in zip(scal, dX, dZ):
                dXt = Gi @ dx @ Gi.conj().T
                dZt = Gm.conj().T @ dz @ Gm
                ap = min(ap, _max_step(s, dXt))
                ad = min(ad, _max_step(s, dZt))
                tX.append(dXt)
                tZ.append(dZt)
            return ap, ad, tX, tZ

        # Predictor.
        try:
            with np.errstate(over="raise", invalid="raise"):
                dX, dxf, dy, dZ = direction([-Xb for Xb in X])
                ap, ad, tX, tZ = steps(dX, dZ)
                ap, ad = min(1.0, ap), min(1.0, ad)
                mu_aff = sum(float(np.vdot(Xb + ap * dx, Zb + ad * dz).real)
                             for Xb, dx, Zb, dz in zip(X, dX, Z, dZ)) / n_tot
                sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

                # Corrector.
                Rc = []
                for (Gm, _, s, _), dXt, dZt in zip(scal, tX, tZ):
                    R = -0.5 * (dXt @ dZt + dZt @ dXt)
                    R = R - np.diag(s * s) + sigma * mu * np.eye(s.size)
                    D = 2 * R / (s[:, None] + s[None, :])
                    Rc.append(_herm(Gm @ D @ Gm.conj().T))
                dX, dxf, dy, dZ = direction(Rc)
                ap, ad, _, _ = steps(dX, dZ)
                ap = min(1.0, opts.step_fraction * ap)
                ad = min(1.0, opts.step_fraction * ad)
        except (np.linalg.LinAlgError, FloatingPointError):
            # the scaling has degenerated near the optimum; keep the best iterate
            status = "numerical-failure"
            break
        if ap < 1e-12 and ad < 1e-12:
            status = "numerical-failure"
            break
        X = [_herm(Xb + ap * dx) for Xb, dx in zip(X, dX)]
        xf = xf + ap * dxf
        y = y + ad * dy
        Z = [_herm(Zb + ad * dz) for Zb, dz in zip(Z, dZ)]

    if status != "optimal" and best is not None:
        _, X, xf, y, Z = best
    return _assemble(problem, comp, X, xf, y, status, it, history)


def _assemble(problem, comp, X, xf, y, status, iters, history) -> SdpSolution:
    m_orig = problem.n_constraints
    y_full = np.zeros(m_orig)
    # internal y is for min <-C, X>; the user dual uses y' = -y
    y_full[comp.kept] = -y / comp.scale
    Xs: list[np.ndarray] = [None] * len(problem.blocks)  # type: ignore[list-item]
    for (k, _, _, _), Xb in zip(comp.psd, X):
        Xs[k] = np.asarray(Xb)
    off = 0
    for k, F, _ in comp.free:
        nfk = F.shape[1]
        Xs[k] = np.asarray(xf[off:off + nfk])
        off += nfk
    Zs = [a - C for a, C in zip(problem.adjoint(y_full), problem.objective)]
    pval = problem.objective_value(Xs)
    dval = float(problem.rhs() @ y_full)
    res = problem.apply_constraints(Xs) - problem.rhs()
    pres = float(np.linalg.norm(res, np.inf)) if res.size else 0.0
    dres = 0.0
    for Zb, blk in zip(Zs, problem.blocks):
        if blk.kind == FREE:
            dres = max(dres, float(np.abs(Zb).max(initial=0.0)))
    relgap = abs(pval - dval) / (1 + abs(pval) + abs(dval))
    if status != "optimal":
        # Accept a slightly stalled run if it still meets the published contract.
        nb = 1 + np.linalg.norm(problem.rhs())
        mins = [np.linalg.eigvalsh(Zb)[0] for Zb, blk in zip(Zs, problem.blocks) if blk.kind == PSD]
        if relgap <= 1e-7 and pres <= 1e-8 * nb and dres <= 1e-8 and min(mins, default=0) >= -1e-8:
            status = "optimal"
    return SdpSolution(status, Xs, y_full, Zs, pval, dval, relgap, pres, dres, iters,
                       info={"real_arithmetic": comp.real, "rows_used": int(comp.kept.size),
                             "history": history})


# ---------------------------------------------------------------- utilities


def embed_hermitian(problem: SdpProblem) -> SdpProblem:
    """Equivalent problem over real symmetric blocks of twice the size.

    A Hermitian ``H = R + iS`` becomes ``[[R, -S], [S, R]]``; coefficients
    are halved so that inner products, hence values, are unchanged.
    """
    out = SdpProblem()

    def emb(A):
        R, S = np.real(A), np.imag(A)
        top = np.concatenate([R, -S], axis=-1)
        bot = np.concatenate([S, R], axis=-1)
        return np.concatenate([top, bot], axis=-2)

    for blk, C in zip(problem.blocks, problem.objective):
        if blk.kind == PSD:
            k = out.add_block(blk.label, 2 * blk.dim)
            out.set_objective(k, emb(C) / 2)
        else:
            k = out.add_block(blk.label, blk.dim, FREE)
            out.set_objective(k, C)
    for coeffs, rhs in problem._chunks:
        new = {}
        for b, A in coeffs.items():
            new[b] = emb(A) / 2 if problem.blocks[b].kind == PSD else A
        out.add_constraints(new, rhs)
    return out


def unembed_hermitian(Xr: np.ndarray) -> np.ndarray:
    n = Xr.shape[0] // 2
    R = (Xr[:n, :n] + Xr[n:, n:]) / 2
    S = (Xr[n:, :n] - Xr[:n, n:]) / 2
    return R + 1j * S


@dataclass
class Certificate:
    primal_value: float
    dual_value: float
    relative_gap: float
    primal_residual: float
    primal_min_eig: float
    dual_min_eig: float
    dual_free_residual: float
    weak_duality: bool
    ok: bool
    flags: list[str]


def certify(solution: SdpSolution, problem: SdpProblem, tol: float = 1e-7) -> Certificate:
    """Recompute every residual of ``solution`` from the problem data alone."""
    X = solution.X
    y = np.asarray(solution.y, dtype=float)
    b = problem.rhs()
    pval = problem.objective_value(X)
    dval = float(b @ y)
    res = problem.apply_constraints(X) - b
    pres = float(np.abs(res).max(initial=0.0))
    Zs = [a - C for a, C in zip(problem.adjoint(y), problem.objective)]
    xmin, zmin, fres = math.inf, math.inf, 0.0
    for Xb, Zb, blk in zip(X, Zs, problem.blocks):
        if blk.kind == PSD:
            xmin = min(xmin, float(np.linalg.eigvalsh(_herm(np.asarray(Xb)))[0]))
            zmin = min(zmin, float(np.linalg.eigvalsh(Zb)[0]))
        else:
            fres = max(fres, float(np.abs(Zb).max(initial=0.0)))
    scale = 1 + abs(pval) + abs(dval)
    relgap = abs(pval - dval) / scale
    weak = pval <= dval + tol * scale
    flags = []
    if pres > 1e-8 * (1 + np.linalg.norm(b)):
        flags.append("primal-residual")
    if xmin < -1e-8:
        flags.append("primal-psd")
    if zmin < -1e-8:
        flags.append("dual-psd")
    if fres > 1e-8:
        flags.append("dual-free-residual")
    if relgap > tol:
        flags.append("gap")
    if not weak:
        flags.append("weak-duality")
    return Certificate(pval, dval, relgap, pres, xmin, zmin, fres, weak, not flags, flags)


def solve_checked(problem: SdpProblem, options: SdpOptions | None = None) -> SdpSolution:
    """``solve`` with one tightened retry when the first pass stalls."""
    sol = solve(problem, options)
    if sol.optimal:
        return sol
    opts = options or SdpOptions()
    retry = SdpOptions(gap_tol=opts.gap_tol, feas_tol=opts.feas_tol,
                       max_iters=opts.max_iters, step_fraction=0.9, rank_tol=opts.rank_tol)
    sol2 = solve(problem, retry)
    return sol2 if sol2.optimal or sol2.relative_gap < sol.relative_gap else sol


# ---------------------------------------------------------------- SDPA dump


def write_sdpa(problem: SdpProblem, path) -> None:
    """Write ``problem`` in sparse SDPA format (real symmetric embedding).

    The file states the SDPA *dual* form ``max <F0, Y>`` s.t.
    ``<F_i, Y> = c_i``, which is exactly our primal: ``F0 = C`` and
    ``F_i = A_i``.  Lines: comment, ``m``, number of blocks, block sizes,
    the vector ``c``, then ``matno blkno i j value`` for upper-triangular
    nonzeros (1-based).  Free blocks are not representable and rejected.
    """
    if any(blk.kind != PSD for blk in problem.blocks):
        raise SolverError("SDPA dump supports PSD blocks only")
    real = embed_hermitian(problem)
    b = real.rhs()
    lines = ['"contracta SDP dump: max <F0,Y> s.t. <Fi,Y> = ci, Y psd"',
             str(real.n_constraints), str(len(real.blocks)),
             " ".join(str(blk.dim) for blk in real.blocks),
             " ".join(repr(float(v)) for v in b)]

    def entries(matno, blk, A):
        iu = np.triu_indices(A.shape[0])
        vals = np.real(A)[iu]
        for i, j, v in zip(iu[0], iu[1], vals):
            if v != 0.0:
                lines.append(f"{matno} {blk + 1} {i + 1} {j + 1} {float(v)!r}")

    for k, C in enumerate(real.objective):
        entries(0, k, C)
    for k in range(len(real.blocks)):
        rows, A = real.block_coefficients(k)
        for r, Ar in zip(rows, A):
            entries(int(r) + 1, k, Ar)
    Path(path).write_text("\n".join(lines) + "\n")


def read_sdpa(path) -> SdpProblem:
    """Read a file written by :func:`write_sdpa` (real symmetric blocks)."""
    raw = [ln.strip() for ln in Path(path).read_text().splitlines()]
    raw = [ln for ln in raw if ln and not ln.startswith(('"', "*"))]
    m = int(raw[0].split()[0])
    nblocks = int(raw[1].split()[0])
    sizes = [int(s) for s in raw[2].replace(",", " ").split()[:nblocks]]
    c = np.array([float(s) for s in raw[3].replace(",", " ").split()[:m]])
    prob = SdpProblem()
    for k, n in enumerate(sizes):
        prob.add_block(f"b{k}", n)
    F = [np.zeros((m + 1, n, n)) for n in sizes]
    for ln in raw[4:]:
        matno, blk, i, j, v = ln.split()[:5]
        matno, blk, i, j = int(matno), int(blk) - 1, int(i) - 1, int(j) - 1
        F[blk][matno, i, j] = float(v)
        F[blk][matno, j, i] = float(v)
    for k in range(nblocks):
        prob.set_objective(k, F[k][0])
    prob.add_constraints({k: F[k][1:] for k in range(nblocks)}, c)
    return prob
