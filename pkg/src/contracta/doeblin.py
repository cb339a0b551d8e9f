"""Quantum Doeblin coefficient and the bound ``eta_tr <= 1 - alpha``.

``alpha(Phi) = max tr X_B  s.t.  I_A (x) X_B <= d_A J(Phi)``.  The program is
solved through its dual ``min <d_A J, Y>`` over ``Y >= 0`` with
``tr_A Y = I_B``; the dual multipliers give the witness ``X_B``, which is then
shifted by its worst feasibility violation so the reported ``alpha`` is
attained by an exactly feasible operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import KrausChannel, choi
from .linalg import hermitian_basis
from .sdp import SdpOptions, SdpProblem, SdpSolution, certify, solve_checked


@dataclass
class DoeblinResult:
    alpha: float
    upper_bound_eta: float
    witness: np.ndarray
    solver_value: float
    min_eig_slack: float
    status: str
    certificate: object = None


def _doeblin_problem(J: np.ndarray, d_A: int, d_B: int, scale: float) -> SdpProblem:
    prob = SdpProblem()
    blk = prob.add_block("Y", d_A * d_B)
    prob.set_objective(blk, -scale * J)
    H = hermitian_basis(d_B)
    coeffs = np.einsum("ab,kcd->kacbd", np.eye(d_A), H).reshape(len(H), d_A * d_B, d_A * d_B)
    prob.add_constraints({blk: coeffs}, np.real(np.einsum("kii->k", H)))
    return prob


def doeblin_alpha(ch: KrausChannel, strict_choi_state: bool = False,
                  options: SdpOptions | None = None) -> DoeblinResult:
    """Doeblin coefficient of ``ch``.

    By default the constraint uses ``d_A J`` (trace ``d_A``); with
    ``strict_choi_state`` the unit-trace Choi state itself is used.
    """
    Jm = choi(ch)
    d_A, d_B = Jm.d_A, Jm.d_B
    scale = 1.0 if strict_choi_state else float(d_A)
    prob = _doeblin_problem(Jm.matrix, d_A, d_B, scale)
    sol: SdpSolution = solve_checked(prob, options)
    H = hermitian_basis(d_B)
    X = -np.einsum("k,kij->ij", sol.y, H)
    X = (X + X.conj().T) / 2
    slack = scale * Jm.matrix - np.kron(np.eye(d_A), X)
    lam = float(np.linalg.eigvalsh((slack + slack.conj().T) / 2)[0])
    if lam < 0:
        X = X + lam * np.eye(d_B)
    alpha = float(np.trace(X).real)
    return DoeblinResult(alpha, 1.0 - alpha, X, -sol.dual_value, lam, sol.status,
                         certify(sol, prob))


def doeblin_bound_eta(ch: KrausChannel) -> float:
    return doeblin_alpha(ch).upper_bound_eta


def is_input_block_diagonal(ch: KrausChannel, tol: float = 1e-12) -> bool:
    """Whether the Choi matrix has no coherences between input basis states."""
    J = choi(ch).matrix
    T = J.reshape(ch.d_in, ch.d_out, ch.d_in, ch.d_out)
    off = ~np.eye(ch.d_in, dtype=bool)
    return bool(np.abs(T.transpose(0, 2, 1, 3)[off]).max(initial=0.0) <= tol)


def induced_doeblin_blockdiag(ch: KrausChannel) -> float | None:
    """Induced Doeblin coefficient for channels with input-block-diagonal Choi.

    There ``d_A J - I (x) X`` is block diagonal over a classical input basis,
    block positivity reduces to positivity, and the value equals ``alpha``.
    Returns ``None`` for all other channels.
    """
    if not is_input_block_diagonal(ch):
        return None
    return doeblin_alpha(ch).alpha
