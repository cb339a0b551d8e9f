"""Channels built from Little Grothendieck instances.

An instance is a list of Hermitian ``d x d`` matrices ``F_i`` (or real vectors
``f_i``, read as diagonal matrices).  With ``Ft_i = F_i (+) (-F_i)`` and
``b(Y) = (<Ft_i, Y>)_i`` the map

    Phi*_alpha(Y) = alpha (b e* + e b*) + tr(Y)/(2d) I_{n+1},    e = e_{n+1},

is unital, and completely positive for small ``alpha``.  Its eigenvalue gap is
``2 alpha ||b(Y)||``, so ``eta_tr(Phi_alpha) = 2 alpha ||F||`` where
``||F|| = max_{||Y|| <= 1} ||(<F_i, Y>)_i||_2``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channels import (KrausChannel, Superoperator, _matrix_from_json, apply,
                       channel_from_adjoint_superoperator)
from .linalg import haar_unitary, hermitian_sign

HERMITIAN = "hermitian"
COMMUTATIVE = "commutative"
ALPHA_CAP = 1e6
CP_TOL = 1e-10


@dataclass
class GrothendieckInstance:
    variant: str
    operators: np.ndarray  # (n, d, d) Hermitian, or (n, d) real vectors

    def __post_init__(self):
        if self.variant == COMMUTATIVE:
            ops = np.asarray(self.operators, dtype=float)
            if ops.ndim != 2:
                raise ValueError("commutative instance needs an (n, d) array of vectors")
        elif self.variant == HERMITIAN:
            ops = np.asarray(self.operators, dtype=complex)
            if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
                raise ValueError("hermitian instance needs an (n, d, d) array")
            if np.abs(ops - np.conj(np.swapaxes(ops, 1, 2))).max(initial=0.0) > 1e-10:
                raise ValueError("operators must be Hermitian")
        else:
            raise ValueError(f"unknown variant {self.variant!r}")
        if ops.shape[0] < 1 or ops.shape[1] < 1:
            raise ValueError("need n, d >= 1")
        self.operators = ops

    @property
    def n(self) -> int:
        return self.operators.shape[0]

    @property
    def d(self) -> int:
        return self.operators.shape[1]

    def matrices(self) -> np.ndarray:
        """The ``F_i`` as ``(n, d, d)`` matrices."""
        if self.variant == COMMUTATIVE:
            return np.array([np.diag(f) for f in self.operators], dtype=complex)
        return self.operators

    def doubled(self) -> np.ndarray:
        F = self.matrices()
        n, d = self.n, self.d
        out = np.zeros((n, 2 * d, 2 * d), dtype=complex)
        out[:, :d, :d] = F
        out[:, d:, d:] = -F
        return out

    def dual(self, Y) -> np.ndarray:
        """``F*(Y) = (<F_i, Y>)_i`` for a Hermitian ``d x d`` matrix (or a real vector)."""
        Y = np.asarray(Y)
        if Y.ndim == 1:
            Y = np.diag(Y)
        return np.einsum("kij,ij->k", self.matrices().conj(), Y).real


@dataclass
class ReductionOutput:
    channel: KrausChannel
    alpha: float
    alpha_max: float
    norm_relation_residual: float | None = None


def psi(inst: GrothendieckInstance, Y) -> np.ndarray:
    Ft = inst.doubled()
    b = np.zeros(inst.n + 1, dtype=complex)
    b[:inst.n] = np.einsum("kij,ij->k", Ft.conj(), np.asarray(Y))
    e = np.zeros(inst.n + 1)
    e[-1] = 1.0
    return np.outer(b, e) + np.outer(e, b)


def phi_alpha_adjoint(inst: GrothendieckInstance, alpha: float, Y) -> np.ndarray:
    Y = np.asarray(Y)
    return alpha * psi(inst, Y) + np.trace(Y) / (2 * inst.d) * np.eye(inst.n + 1)


def adjoint_matrix(inst: GrothendieckInstance, alpha: float) -> np.ndarray:
    """Matrix of ``Phi*_alpha`` on row-major ``vec``; shape ``((n+1)^2, (2d)^2)``."""
    n1, D = inst.n + 1, 2 * inst.d
    Ft = inst.doubled()
    A = np.outer(np.eye(n1).reshape(-1), np.eye(D).reshape(-1)) / D
    for i in range(inst.n):
        E = np.zeros((n1, n1))
        E[i, -1] = E[-1, i] = 1.0
        A = A + alpha * np.outer(E.reshape(-1), Ft[i].conj().reshape(-1))
    return A


def _choi_min_eig(inst: GrothendieckInstance, alpha: float) -> float:
    n1, D = inst.n + 1, 2 * inst.d
    S = adjoint_matrix(inst, alpha).conj().T
    J = S.reshape(D, D, n1, n1).transpose(2, 0, 3, 1).reshape(n1 * D, n1 * D)
    return float(np.linalg.eigvalsh((J + J.conj().T) / 2)[0])


def max_cp_alpha(inst: GrothendieckInstance, tol: float = 1e-9) -> float:
    """Largest ``alpha`` with a positive semidefinite Choi matrix, by bisection."""
    def cp(a):
        return _choi_min_eig(inst, a) >= -CP_TOL

    hi = 1.0
    while cp(hi):
        if hi >= ALPHA_CAP:
            return ALPHA_CAP
        hi *= 2
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = (lo + hi) / 2
        if cp(mid):
            lo = mid
        else:
            hi = mid
    return lo


def build_phi_alpha(inst: GrothendieckInstance, alpha: float | None = None) -> ReductionOutput:
    amax = max_cp_alpha(inst)
    if alpha is None:
        alpha = 0.9 * amax
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if alpha > amax * (1 + 1e-9):
        raise ValueError(f"alpha = {alpha} exceeds the CP threshold {amax}")
    adj = Superoperator(2 * inst.d, inst.n + 1, adjoint_matrix(inst, alpha))
    ch = channel_from_adjoint_superoperator(adj)
    return ReductionOutput(ch, float(alpha), float(amax))


def eigen_gap(inst: GrothendieckInstance, alpha: float, Y) -> float:
    w = np.linalg.eigvalsh(phi_alpha_adjoint(inst, alpha, Y))
    return float(w[-1] - w[0])


# ---------------------------------------------------------------- the norm ||F||


def exact_norm_commutative(inst: GrothendieckInstance, max_d: int = 16) -> tuple[float, np.ndarray]:
    """``max_{y in {-1,1}^d} ||(<f_i, y>)_i||_2``; the maximum of a convex function
    over the cube is attained at a vertex."""
    if inst.variant != COMMUTATIVE:
        raise ValueError("exact enumeration needs a commutative instance")
    if inst.d > max_d:
        raise ValueError(f"d = {inst.d} too large for enumeration")
    ys = np.array(list(itertools.product((-1.0, 1.0), repeat=inst.d)))
    vals = np.linalg.norm(ys @ inst.operators.T, axis=1)
    k = int(np.argmax(vals))
    return float(vals[k]), ys[k]


def norm_seesaw(inst: GrothendieckInstance, restarts: int = 32, iters: int = 200,
                samples: int = 2000, seed: int = 0) -> tuple[float, np.ndarray]:
    """Lower bound on ``||F||``: alternate ``c = F*(Y)/||F*(Y)||`` and
    ``Y = sign(sum c_i F_i)``, plus random sign matrices."""
    rng = np.random.default_rng(seed)
    F = inst.matrices()
    d = inst.d
    best, bestY = -1.0, None

    def consider(Y):
        nonlocal best, bestY
        v = float(np.linalg.norm(inst.dual(Y)))
        if v > best:
            best, bestY = v, Y
        return v

    for _ in range(samples):
        U = haar_unitary(d, rng) if inst.variant == HERMITIAN else np.eye(d)
        s = rng.choice((-1.0, 1.0), size=d)
        consider((U * s) @ U.conj().T)
    for _ in range(restarts):
        c = rng.normal(size=inst.n)
        prev = -1.0
        for _ in range(iters):
            Y = hermitian_sign(np.einsum("k,kij->ij", c, F))
            v = consider(Y)
            g = inst.dual(Y)
            if np.linalg.norm(g) == 0 or v - prev <= 1e-13:
                break
            c = g / np.linalg.norm(g)
            prev = v
    return best, bestY


@dataclass
class NormIdentityReport:
    norm: float
    norm_exact: bool
    eta_lower: float
    eta_upper: float
    alpha: float
    bracket: tuple[float, float]  # (eta_lower, eta_upper) / (2 alpha)
    residual: float
    printed_bracket: tuple[float, float]  # 2 alpha (eta_lower, eta_upper)
    printed_residual: float


def norm_identity_check(inst: GrothendieckInstance, out: ReductionOutput, restarts: int = 32,
                        seed: int = 0) -> NormIdentityReport:
    """Compare an independent ``||F||`` with bounds on ``eta_tr(Phi_alpha)``.

    Consistent with the eigenvalue-gap derivation, ``eta = 2 alpha ||F||``,
    so ``eta_lower/(2 alpha) <= ||F|| <= eta_upper/(2 alpha)``; ``residual`` is
    the violation of that bracket.  ``printed_residual`` is the violation of
    ``2 alpha eta_lower <= ||F|| <= 2 alpha eta_upper``.
    """
    from .hierarchy import eta_upper_bound
    from .lower_bounds import seesaw_eta
    if inst.variant == COMMUTATIVE and inst.d <= 16:
        norm, exact = exact_norm_commutative(inst)[0], True
    else:
        norm, exact = norm_seesaw(inst, seed=seed)[0], False
    lower = seesaw_eta(out.channel, restarts=restarts, seed=seed).value
    upper = eta_upper_bound(out.channel, 1)
    a = out.alpha
    br = (lower / (2 * a), upper / (2 * a))
    pr = (2 * a * lower, 2 * a * upper)
    res = max(0.0, br[0] - norm, norm - br[1])
    pres = max(0.0, pr[0] - norm, norm - pr[1])
    out.norm_relation_residual = res
    return NormIdentityReport(norm, exact, lower, upper, a, br, res, pr, pres)


def outputs_diagonal(out: ReductionOutput, tol: float = 1e-10) -> bool:
    """Whether ``Phi_alpha`` maps every matrix unit to a diagonal operator."""
    n1 = out.channel.d_in
    for a in range(n1):
        for b in range(n1):
            E = np.zeros((n1, n1))
            E[a, b] = 1.0
            Y = apply(out.channel, E)
            if np.abs(Y - np.diag(np.diag(Y))).max() > tol:
                return False
    return True


def random_commutative(n: int, d: int, rng: np.random.Generator) -> GrothendieckInstance:
    return GrothendieckInstance(COMMUTATIVE, rng.normal(size=(n, d)))


def random_hermitian_instance(n: int, d: int, rng: np.random.Generator) -> GrothendieckInstance:
    G = rng.normal(size=(n, d, d)) + 1j * rng.normal(size=(n, d, d))
    return GrothendieckInstance(HERMITIAN, (G + np.conj(np.swapaxes(G, 1, 2))) / 2)


def instance_from_dict(obj: dict) -> GrothendieckInstance:
    variant = obj.get("variant", HERMITIAN)
    if variant == COMMUTATIVE:
        vecs = obj["vectors"] if "vectors" in obj else obj["operators"]
        return GrothendieckInstance(COMMUTATIVE, np.asarray(vecs, dtype=float))
    return GrothendieckInstance(HERMITIAN, np.array([_matrix_from_json(M) for M in obj["operators"]]))


def load_instance(path) -> GrothendieckInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "GrothendieckInstance", "ReductionOutput", "HERMITIAN", "COMMUTATIVE", "psi",
    "phi_alpha_adjoint", "adjoint_matrix", "max_cp_alpha", "build_phi_alpha", "eigen_gap",
    "exact_norm_commutative", "norm_seesaw", "NormIdentityReport", "norm_identity_check",
    "outputs_diagonal", "random_commutative", "random_hermitian_instance",
    "instance_from_dict", "load_instance",
]
