"""Dense complex linear algebra shared by the rest of the package.

Operators are plain ``numpy`` arrays.  Multipartite operators act on
``C^{d_0} (x) C^{d_1} (x) ...`` with the usual Kronecker ordering (the first
factor is the most significant index).  ``vec`` is row-major:
``vec(|i><j|) = |i> (x) |j>``.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

# Absolute tolerance on eigenvalues for PSD / Hermiticity decisions.
EIG_TOL = 1e-10


def _as_square(M) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def is_hermitian(M, tol: float | None = None) -> bool:
    M = _as_square(M)
    if tol is None:
        tol = 1e-12 * max(M.shape[0], 1) * max(1.0, float(np.abs(M).max(initial=0.0)))
    return bool(np.abs(M - M.conj().T).max(initial=0.0) <= tol)


def check_hermitian(M, tol: float | None = None) -> np.ndarray:
    """Return ``M`` as an exactly Hermitian array, or raise ``ValueError``."""
    M = _as_square(M)
    if not is_hermitian(M, tol):
        raise ValueError("matrix is not Hermitian")
    return (M + M.conj().T) / 2


def check_density(rho, tol: float = EIG_TOL) -> np.ndarray:
    rho = check_hermitian(rho)
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError(f"trace {np.trace(rho).real} is not 1")
    if np.linalg.eigvalsh(rho)[0] < -tol:
        raise ValueError("matrix is not positive semidefinite")
    return rho


def eig_hermitian(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix with eigenvalues descending.

    Returns ``(w, V)`` with ``H = V @ diag(w) @ V^*`` and orthonormal columns
    in ``V``.
    """
    H = check_hermitian(H)
    w, V = np.linalg.eigh(H)
    return w[::-1].copy(), V[:, ::-1].copy()


def trace_norm(M) -> float:
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if M.shape[0] == M.shape[1] and is_hermitian(M):
        return float(np.abs(np.linalg.eigvalsh((M + M.conj().T) / 2)).sum())
    return float(np.linalg.svd(M, compute_uv=False).sum())


def operator_norm(M) -> float:
    return float(np.linalg.norm(np.asarray(M), 2))


def _check_dims(M: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ValueError(f"invalid subsystem dimensions {dims}")
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] != int(np.prod(dims)):
        raise ValueError(f"matrix of shape {M.shape} does not match dims {dims}")
    return dims


def _as_index_set(idx, n: int) -> list[int]:
    if isinstance(idx, (int, np.integer)):
        idx = [int(idx)]
    out = sorted(set(int(i) for i in idx))
    if any(i < 0 or i >= n for i in out):
        raise ValueError(f"subsystem index out of range in {out}")
    return out


def partial_trace(M, dims: Sequence[int], traced) -> np.ndarray:
    """Trace out the subsystem(s) ``traced`` of an operator on ``prod(dims)``."""
    M = np.asarray(M)
    dims = _check_dims(M, dims)
    n = len(dims)
    traced = _as_index_set(traced, n)
    kept = [i for i in range(n) if i not in traced]
    T = M.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[n + i] if i in kept else letters[i] for i in range(n)]
    out = [letters[i] for i in kept] + [letters[n + i] for i in kept]
    R = np.einsum("".join(row + col) + "->" + "".join(out), T)
    dk = int(np.prod([dims[i] for i in kept])) if kept else 1
    return R.reshape(dk, dk)


def partial_transpose(M, dims: Sequence[int], subsystems) -> np.ndarray:
    """Transpose the listed subsystems in the computational basis."""
    M = np.asarray(M)
    dims = _check_dims(M, dims)
    n = len(dims)
    subs = _as_index_set(subsystems, n)
    T = M.reshape(dims + dims)
    axes = list(range(2 * n))
    for i in subs:
        axes[i], axes[n + i] = axes[n + i], axes[i]
    return T.transpose(axes).reshape(M.shape)


def permute_systems(M, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: output factor ``p`` is input factor ``perm[p]``."""
    M = np.asarray(M)
    dims = _check_dims(M, dims)
    n = len(dims)
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of {n} systems")
    T = M.reshape(dims + dims)
    T = T.transpose(perm + [n + p for p in perm])
    return T.reshape(M.shape)


def kron(*ops) -> np.ndarray:
    if len(ops) == 1 and not isinstance(ops[0], np.ndarray):
        ops = tuple(ops[0])
    return reduce(np.kron, ops, np.ones((1, 1)))


def sqrtm_psd(M) -> np.ndarray:
    w, V = np.linalg.eigh(check_hermitian(M))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def fidelity(rho, sigma) -> float:
    """Squared fidelity ``||sqrt(rho) sqrt(sigma)||_1^2``."""
    rho = check_density(rho)
    sigma = check_density(sigma)
    if rho.shape != sigma.shape:
        raise ValueError("states act on different spaces")
    F = trace_norm(sqrtm_psd(rho) @ sqrtm_psd(sigma)) ** 2
    return float(min(max(F, 0.0), 1.0))


def vec(M) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    return M.reshape(-1).copy()


def unvec(v, p: int, q: int) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or v.size != p * q:
        raise ValueError(f"vector of length {v.size} cannot be reshaped to {p}x{q}")
    return v.reshape(p, q).copy()


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt inner product ``tr(A^* B)``."""
    return complex(np.vdot(np.asarray(A), np.asarray(B)))


def proj(v) -> np.ndarray:
    v = np.asarray(v).reshape(-1)
    return np.outer(v, v.conj())


def hermitian_sign(H) -> np.ndarray:
    """``P_+ - P_-`` for the spectral projectors of ``H``; the kernel counts as +1."""
    w, V = np.linalg.eigh(check_hermitian(H))
    s = np.where(w < 0.0, -1.0, 1.0)
    return (V * s) @ V.conj().T


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal Hermitian basis of ``B(C^n)`` as an array ``(n*n, n, n)``.

    Order: diagonal units, then for each ``p < q`` the symmetric element
    ``(E_pq + E_qp)/sqrt2`` followed by ``i(E_pq - E_qp)/sqrt2``.
    """
    out = np.zeros((n * n, n, n), dtype=complex)
    k = 0
    for p in range(n):
        out[k, p, p] = 1.0
        k += 1
    s = 1 / np.sqrt(2)
    for p in range(n):
        for q in range(p + 1, n):
            out[k, p, q] = out[k, q, p] = s
            out[k + 1, p, q] = 1j * s
            out[k + 1, q, p] = -1j * s
            k += 2
    return out


def herm_to_real(H) -> np.ndarray:
    """Isometric real coordinates of Hermitian matrices (works on stacks)."""
    H = np.asarray(H)
    n = H.shape[-1]
    iu = np.triu_indices(n, 1)
    diag = np.real(np.diagonal(H, axis1=-2, axis2=-1))
    up = H[..., iu[0], iu[1]]
    r2 = np.sqrt(2)
    return np.concatenate([diag, r2 * up.real, r2 * up.imag], axis=-1)


def real_to_herm(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    H = np.zeros(x.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(n)
    H[..., idx, idx] = x[..., :n]
    up = (x[..., n:n + m] + 1j * x[..., n + m:]) / np.sqrt(2)
    H[..., iu[0], iu[1]] = up
    H[..., iu[1], iu[0]] = up.conj()
    return H


def orthonormalize(vectors, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (rows) of the span of the given row vectors."""
    V = np.atleast_2d(np.asarray(vectors))
    if V.size == 0:
        return V.reshape(0, V.shape[-1] if V.ndim == 2 else 0)
    _, s, Vh = np.linalg.svd(V, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, V.shape[1]), dtype=V.dtype)
    r = int(np.sum(s > tol * max(1.0, s[0])))
    return Vh[:r]


# ---------------------------------------------------------------- random objects


def random_unit_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_orthonormal_pair(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    G = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    Q, R = np.linalg.qr(G)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    return Q[:, 0].copy(), Q[:, 1].copy()


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, R = np.linalg.qr(G)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = n if rank is None else rank
    G = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (G + G.conj().T) / 2


def dims_product(dims: Iterable[int]) -> int:
    return int(np.prod(list(dims), dtype=np.int64))
