"""Quantum channels in Kraus, Choi and superoperator form.

Conventions:

* Kraus operators map input to output: ``K_i`` has shape ``(d_out, d_in)``.
* ``choi(ch)`` is the unit-trace state ``(Id (x) Phi)(|psi+><psi+|)`` on
  ``A (x) B`` with ``A`` the input copy, so ``Phi(X) = d_A tr_A(J (X^T (x) I))``.
* A superoperator matrix acts on row-major ``vec``: ``vec(Phi(X)) = S vec(X)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import partial_trace, permute_systems

TP_TOL = 1e-9
KRAUS_EIG_TOL = 1e-10


@dataclass(frozen=True)
class KrausChannel:
    d_in: int
    d_out: int
    kraus: tuple[np.ndarray, ...]

    def __post_init__(self):
        ks = tuple(np.asarray(K, dtype=complex) for K in self.kraus)
        if not ks:
            raise ValueError("a channel needs at least one Kraus operator")
        for K in ks:
            if K.shape != (self.d_out, self.d_in):
                raise ValueError(f"Kraus operator of shape {K.shape}, expected {(self.d_out, self.d_in)}")
            if not np.all(np.isfinite(K)):
                raise ValueError("Kraus operator has non-finite entries")
        object.__setattr__(self, "kraus", ks)

    @classmethod
    def from_list(cls, kraus) -> "KrausChannel":
        ks = [np.atleast_2d(np.asarray(K, dtype=complex)) for K in kraus]
        return cls(ks[0].shape[1], ks[0].shape[0], tuple(ks))

    def stacked(self) -> np.ndarray:
        return np.stack(self.kraus)


@dataclass(frozen=True)
class ChoiMatrix:
    d_A: int
    d_B: int
    matrix: np.ndarray


@dataclass(frozen=True)
class Superoperator:
    d_in: int
    d_out: int
    matrix: np.ndarray


@dataclass
class Diagnostics:
    tp_residual: float
    choi_min_eig: float
    n_kraus: int

    @property
    def ok(self) -> bool:
        return self.tp_residual <= TP_TOL and self.choi_min_eig >= -1e-10


def validate(ch: KrausChannel) -> Diagnostics:
    K = ch.stacked()
    S = np.einsum("kji,kjl->il", K.conj(), K)
    res = float(np.abs(S - np.eye(ch.d_in)).max())
    J = _choi_matrix(K, ch.d_in, ch.d_out)
    return Diagnostics(res, float(np.linalg.eigvalsh(J)[0]), len(ch.kraus))


def _choi_matrix(K: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    # (I (x) K)|psi+> has components K[b, a] / sqrt(d) on |a>|b>
    V = np.transpose(K, (0, 2, 1)).reshape(K.shape[0], d_in * d_out)
    return (V.T @ V.conj()) / d_in


def choi(ch: KrausChannel, check: bool = True) -> ChoiMatrix:
    if check:
        diag = validate(ch)
        if diag.tp_residual > TP_TOL:
            raise ValueError(f"channel is not trace preserving (residual {diag.tp_residual:.2e})")
    J = _choi_matrix(ch.stacked(), ch.d_in, ch.d_out)
    return ChoiMatrix(ch.d_in, ch.d_out, (J + J.conj().T) / 2)


def _check_input(X, d: int) -> np.ndarray:
    X = np.asarray(X)
    if X.shape != (d, d):
        raise ValueError(f"operator of shape {X.shape}, expected {(d, d)}")
    return X


def apply(ch: KrausChannel, X) -> np.ndarray:
    X = _check_input(X, ch.d_in)
    K = ch.stacked()
    return np.einsum("kij,jl,kml->im", K, X, K.conj())


def apply_via_choi(J: ChoiMatrix, X) -> np.ndarray:
    X = _check_input(X, J.d_A)
    M = J.matrix @ np.kron(X.T, np.eye(J.d_B))
    return J.d_A * partial_trace(M, (J.d_A, J.d_B), 0)


def adjoint_apply(ch: KrausChannel, Y) -> np.ndarray:
    Y = _check_input(Y, ch.d_out)
    K = ch.stacked()
    return np.einsum("kji,jl,klm->im", K.conj(), Y, K)


def adjoint_batch(ch: KrausChannel, Ys: np.ndarray) -> np.ndarray:
    K = ch.stacked()
    return np.einsum("kji,njl,klm->nim", K.conj(), Ys, K)


def apply_batch(ch: KrausChannel, Xs: np.ndarray) -> np.ndarray:
    K = ch.stacked()
    return np.einsum("kij,njl,kml->nim", K, Xs, K.conj())


def tensor(ch1: KrausChannel, ch2: KrausChannel) -> KrausChannel:
    ks = [np.kron(A, B) for A in ch1.kraus for B in ch2.kraus]
    return KrausChannel(ch1.d_in * ch2.d_in, ch1.d_out * ch2.d_out, tuple(ks))


def tensor_power(ch: KrausChannel, copies: int) -> KrausChannel:
    if copies < 1:
        raise ValueError("copies must be at least 1")
    out = ch
    for _ in range(copies - 1):
        out = tensor(out, ch)
    return out


def choi_of_tensor(J1: ChoiMatrix, J2: ChoiMatrix) -> ChoiMatrix:
    """Choi of ``Phi1 (x) Phi2`` from the two Choi matrices (A1 A2 B1 B2 order)."""
    M = np.kron(J1.matrix, J2.matrix)
    M = permute_systems(M, (J1.d_A, J1.d_B, J2.d_A, J2.d_B), (0, 2, 1, 3))
    return ChoiMatrix(J1.d_A * J2.d_A, J1.d_B * J2.d_B, M)


def identity_channel(d: int) -> KrausChannel:
    return KrausChannel(d, d, (np.eye(d),))


def kraus_from_choi(J: ChoiMatrix, tol: float = KRAUS_EIG_TOL) -> KrausChannel:
    """Canonical Kraus set from the eigen-decomposition of ``d_A J``."""
    w, V = np.linalg.eigh(J.d_A * J.matrix)
    keep = w > tol
    ks = []
    for lam, v in zip(w[keep][::-1], V[:, keep].T[::-1]):
        ks.append(np.sqrt(lam) * v.reshape(J.d_A, J.d_B).T)
    if not ks:
        raise ValueError("Choi matrix has no positive eigenvalues")
    return KrausChannel(J.d_A, J.d_B, tuple(ks))


def superoperator(ch: KrausChannel) -> Superoperator:
    S = sum(np.kron(K, K.conj()) for K in ch.kraus)
    return Superoperator(ch.d_in, ch.d_out, S)


def adjoint_superoperator(ch: KrausChannel) -> Superoperator:
    """Matrix of ``Phi*`` acting on ``vec(Y)``, a map from ``d_out`` to ``d_in``."""
    S = sum(np.kron(K.conj().T, K.T) for K in ch.kraus)
    return Superoperator(ch.d_out, ch.d_in, S)


def channel_from_adjoint_superoperator(adj: Superoperator, cp_tol: float = 1e-8,
                                       unital_tol: float = 1e-8) -> KrausChannel:
    """Channel ``Phi`` whose adjoint has matrix ``adj`` (``adj.d_in`` = output of ``Phi``)."""
    d_out, d_in = adj.d_in, adj.d_out
    A = np.asarray(adj.matrix)
    if A.shape != (d_in * d_in, d_out * d_out):
        raise ValueError("superoperator shape does not match its dimensions")
    unit = A @ np.eye(d_out).reshape(-1)
    ures = float(np.abs(unit - np.eye(d_in).reshape(-1)).max())
    if ures > unital_tol:
        raise ValueError(f"adjoint map is not unital (residual {ures:.2e})")
    # <Phi(X), Y> = <X, Phi*(Y)> gives the matrix of Phi as the adjoint of A
    # with respect to the row-major vec, i.e. its conjugate transpose.
    S = A.conj().T
    # S[(b,b'),(a,a')] = <b|Phi(|a><a'|)|b'>; Choi (unit trace) J[(a,b),(a',b')] = S / d_in
    J = S.reshape(d_out, d_out, d_in, d_in).transpose(2, 0, 3, 1).reshape(d_in * d_out, d_in * d_out)
    J = J / d_in
    J = (J + J.conj().T) / 2
    mineig = float(np.linalg.eigvalsh(J)[0])
    if mineig < -cp_tol:
        raise ValueError(f"map is not completely positive (Choi eigenvalue {mineig:.2e})")
    return kraus_from_choi(ChoiMatrix(d_in, d_out, J))


def choi_distance(ch1: KrausChannel, ch2: KrausChannel) -> float:
    if (ch1.d_in, ch1.d_out) != (ch2.d_in, ch2.d_out):
        return float("inf")
    return float(np.abs(choi(ch1, False).matrix - choi(ch2, False).matrix).max())


def is_classical_output(ch: KrausChannel, tol: float = 1e-12) -> bool:
    """True if every output of ``ch`` is diagonal in the computational basis."""
    T = choi(ch, False).matrix.reshape(ch.d_in, ch.d_out, ch.d_in, ch.d_out)
    off = ~np.eye(ch.d_out, dtype=bool)
    return bool(np.abs(T.transpose(1, 3, 0, 2)[off]).max(initial=0.0) <= tol)


# ---------------------------------------------------------------- gallery


def _check_unit(name: str, x: float) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} = {x} is outside [0, 1]")
    return x


def gallery_amplitude_damping(p: float, eta: float) -> KrausChannel:
    """Generalized amplitude damping with thermal weight ``p`` and transmissivity ``eta``."""
    p, eta = _check_unit("p", p), _check_unit("eta", eta)
    a, b = np.sqrt(p), np.sqrt(1 - p)
    e, f = np.sqrt(eta), np.sqrt(1 - eta)
    ks = (a * np.array([[1, 0], [0, e]]),
          a * np.array([[0, f], [0, 0]]),
          b * np.array([[e, 0], [0, 1]]),
          b * np.array([[0, 0], [f, 0]]))
    return KrausChannel(2, 2, ks)


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def gallery_depolarizing(p: float) -> KrausChannel:
    p = _check_unit("p", p)
    ks = (np.sqrt(1 - 3 * p / 4) * PAULI["I"],
          np.sqrt(p / 4) * PAULI["X"],
          np.sqrt(p / 4) * PAULI["Y"],
          np.sqrt(p / 4) * PAULI["Z"])
    return KrausChannel(2, 2, ks)


def gallery_counterexample(d: int) -> KrausChannel:
    """Channel sending ``|j>`` to the uniform mixture of the other basis states."""
    d = int(d)
    if d <= 2:
        raise ValueError("the construction needs d > 2")
    ks = []
    for i in range(d):
        for j in range(d):
            if i != j:
                K = np.zeros((d, d))
                K[i, j] = 1 / np.sqrt(d - 1)
                ks.append(K)
    return KrausChannel(d, d, tuple(ks))


GALLERY = {
    "amplitude_damping": gallery_amplitude_damping,
    "depolarizing": gallery_depolarizing,
    "counterexample": gallery_counterexample,
    "identity": lambda d=2: identity_channel(int(d)),
}


def random_channel(d_in: int, d_out: int, rng: np.random.Generator, n_kraus: int | None = None) -> KrausChannel:
    """Random channel from a Haar-like isometry ``C^{d_in} -> C^{d_out} (x) C^r``."""
    r = n_kraus or d_in * d_out
    G = rng.normal(size=(d_out * r, d_in)) + 1j * rng.normal(size=(d_out * r, d_in))
    Q, _ = np.linalg.qr(G)
    ks = tuple(Q[i * d_out:(i + 1) * d_out] for i in range(r))
    return KrausChannel(d_in, d_out, ks)


# ---------------------------------------------------------------- JSON


def _matrix_from_json(M) -> np.ndarray:
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim == 2:
        return arr.astype(complex)
    raise ValueError("matrix entries must be numbers or [re, im] pairs")


def matrix_to_json(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def channel_from_dict(obj: dict) -> KrausChannel:
    if "gallery" in obj:
        name = obj["gallery"]
        if name not in GALLERY:
            raise ValueError(f"unknown gallery channel {name!r}")
        ch = GALLERY[name](**obj.get("params", {}))
        return tensor_power(ch, int(obj.get("copies", 1)))
    ks = tuple(_matrix_from_json(K) for K in obj["kraus"])
    ch = KrausChannel(int(obj["d_in"]), int(obj["d_out"]), ks)
    res = validate(ch).tp_residual
    if res > TP_TOL:
        raise ValueError(f"channel is not trace preserving (residual {res:.2e})")
    return ch


def channel_to_dict(ch: KrausChannel) -> dict:
    return {"d_in": ch.d_in, "d_out": ch.d_out, "kraus": [matrix_to_json(K) for K in ch.kraus]}


def load_channel(path) -> KrausChannel:
    return channel_from_dict(json.loads(Path(path).read_text()))


def dump_channel(ch: KrausChannel, path) -> None:
    Path(path).write_text(json.dumps(channel_to_dict(ch)))
