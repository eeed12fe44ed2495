"""Joint functional graphical lasso (GFGL, FFGL, FFGL2) solved by ADMM.

Each group ``q`` contributes ``-n_q (log det Theta_q - tr(S_q Theta_q))`` and
the groups are tied together by a block penalty on the ``M x M`` blocks of
the precision matrices. The outer ADMM alternates an eigendecomposition
update of ``Theta``, a penalty prox for the split variable ``Z`` and a
scaled dual update. FFGL and FFGL2 off-diagonal blocks have no closed-form
prox; they are solved by a nested ADMM that is warm-started from the previous
outer iteration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from .fudge import EdgeSet, block_norms


class Penalty(str, enum.Enum):
    GFGL = "gfgl"
    FFGL = "ffgl"
    FFGL2 = "ffgl2"
    #: elementwise fused graphical lasso on the pM x pM matrices (blocks ignored)
    FGL = "fgl"


@dataclass
class JfglProblem:
    S_list: Sequence[np.ndarray]
    n_list: Sequence[float]
    M: int
    penalty: Penalty = Penalty.FFGL
    lam1: float = 0.1
    lam2: float = 0.0
    rho: float = 1.0
    rho_inner: float = 1.0
    max_iters: int = 2000
    tol: float = 1e-6
    inner_max_iters: int = 500
    inner_tol: float = 1e-8
    #: rebalance ``rho`` when the primal and dual residuals drift apart by more than 10x
    adaptive_rho: bool = True

    def __post_init__(self):
        self.penalty = Penalty(self.penalty)
        self.S_list = [np.asarray(S, dtype=float) for S in self.S_list]
        if len(self.S_list) != len(self.n_list) or not self.S_list:
            raise ShapeError("need one sample size per covariance matrix")
        shape = self.S_list[0].shape
        if any(S.shape != shape for S in self.S_list) or shape[0] != shape[1] or shape[0] % self.M:
            raise ShapeError(f"covariances must share a square shape divisible by M={self.M}")
        if min(self.lam1, self.lam2) < 0 or self.rho <= 0 or self.rho_inner <= 0:
            raise InvalidArgumentError("penalties must be >= 0 and ADMM parameters > 0")
        if any(n <= 0 for n in self.n_list):
            raise InvalidArgumentError("sample sizes must be positive")
        if self.penalty is not Penalty.GFGL and len(self.S_list) != 2:
            raise InvalidArgumentError(f"{self.penalty.value} is implemented for two groups only")

    @property
    def Q(self) -> int:
        return len(self.S_list)


@dataclass
class PrecisionEstimate:
    theta: np.ndarray
    M: int
    #: last Theta iterate (positive definite by construction)
    theta_iterate: np.ndarray = field(repr=False)
    iterations: int = 0
    converged: bool = False

    def block(self, j: int, l: int) -> np.ndarray:
        M = self.M
        return self.theta[j * M:(j + 1) * M, l * M:(l + 1) * M]


def theta_update(S, n_q, Z, U, rho) -> np.ndarray:
    """Minimizer of ``-n_q (log det T - tr(S T)) + rho/2 ||T - Z + U||_F^2``."""
    if rho <= 0 or n_q <= 0:
        raise InvalidArgumentError("rho and n_q must be positive")
    C = S - rho * Z / n_q + rho * U / n_q
    d, V = np.linalg.eigh(0.5 * (C + C.T))
    dt = n_q / (2 * rho) * (-d + np.sqrt(d * d + 4 * rho / n_q))
    T = (V * dt) @ V.T
    return 0.5 * (T + T.T)



def _to_blocks(A, M):
    p = A.shape[0] // M
    return A.reshape(p, M, p, M).transpose(0, 2, 1, 3)  # (p, p, M, M)


def _from_blocks(B):
    p, _, M, _ = B.shape
    return B.transpose(0, 2, 1, 3).reshape(p * M, p * M)


def _shrink(X, t):
    """Frobenius soft-threshold of each trailing ``M x M`` matrix of ``X`` by ``t``."""
    nrm = np.sqrt(np.sum(X * X, axis=(-2, -1), keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > t, 1.0 - t / nrm, 0.0)
    return X * scale


def _merge(Z1, Z2, A1, A2, merged):
    """Set fused entries of both outputs to the same midpoint, so differences are exactly zero."""
    mid = 0.5 * (A1 + A2)
    merged = np.broadcast_to(merged, mid.shape)
    return np.where(merged, mid, Z1), np.where(merged, mid, Z2)


def fuse_frobenius(A1, A2, b):
    """Prox of ``b ||Z1 - Z2||_F`` applied blockwise over the trailing two axes."""
    d = A1 - A2
    nd = np.sqrt(np.sum(d * d, axis=(-2, -1), keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(nd > 2 * b, b / nd, 0.0) * d
    return _merge(A1 - shift, A2 + shift, A1, A2, nd <= 2 * b)


def fuse_elementwise(A1, A2, b):
    """Prox of ``b |Z1 - Z2|_1`` (entrywise)."""
    d = A1 - A2
    merged = np.abs(d) <= 2 * b
    shift = np.where(merged, 0.0, b * np.sign(d))
    return _merge(A1 - shift, A2 + shift, A1, A2, merged)


def prox_gfgl(A_list: Sequence[np.ndarray], a: float, b: float, M: int) -> List[np.ndarray]:
    """Closed-form prox of the grouped penalty; diagonal blocks are copied."""
    if a < 0 or b < 0:
        raise InvalidArgumentError("thresholds must be >= 0")
    blocks = np.stack([_to_blocks(np.asarray(A, float), M) for A in A_list])  # (Q, p, p, M, M)
    nrm = np.sqrt(np.sum(blocks * blocks, axis=(-2, -1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.where(nrm > a, 1.0 - a / nrm, 0.0)
        group = np.sqrt(np.sum(np.maximum(nrm - a, 0.0) ** 2, axis=0))
        outer = np.where(group > b, 1.0 - b / group, 0.0)
    scale = inner * outer[None]
    p = blocks.shape[1]
    diag = np.eye(p, dtype=bool)
    scale[:, diag] = 1.0
    out = blocks * scale[..., None, None]
    return [_from_blocks(Z) for Z in out]


@dataclass
class _InnerState:
    W: np.ndarray
    R: np.ndarray
    V: np.ndarray


def _inner_admm(B, a, b, fuse, rho_p, max_iters, tol, state: Optional[_InnerState] = None):
    """Nested ADMM for ``1/2 sum ||Z_q - B_q||^2 + a sum ||Z_q||_F + b * fused(Z_1 - Z_2)``.

    ``B`` has shape ``(2, K, M, M)``; all ``K`` block pairs are solved together.
    Returns the fused variable ``R`` (exact fusion), convergence flag and state.
    """
    if state is None:
        eye = np.broadcast_to(np.eye(B.shape[-1]), B.shape).copy()
        state = _InnerState(eye, np.zeros_like(B), np.zeros_like(B))
    W, R, V = state.W, state.R, state.V
    converged = False
    for _ in range(max_iters):
        C = (B + rho_p * (R - V)) / (1 + rho_p)
        W = _shrink(C, a / (1 + rho_p))
        D = W + V
        R_old = R
        R = np.stack(fuse(D[0], D[1], b / rho_p))
        V = V + W - R
        primal = np.max(np.abs(W - R)) if W.size else 0.0
        dual = rho_p * np.max(np.abs(R - R_old)) if W.size else 0.0
        if primal < tol and dual < tol:
            converged = True
            break
    return R, converged, _InnerState(W, R, V)


def _fused_pair(A1, A2, a, b, fuse, rho_inner=1.0, max_iters=500, tol=1e-8):
    if a < 0 or b < 0:
        raise InvalidArgumentError("thresholds must be >= 0")
    A1, A2 = np.asarray(A1, float), np.asarray(A2, float)
    if a == 0:
        Z1, Z2 = fuse(A1, A2, b)
        return Z1, Z2, True
    R, ok, _ = _inner_admm(np.stack([A1, A2])[:, None], a, b, fuse, rho_inner, max_iters, tol)
    return R[0, 0], R[1, 0], ok


def prox_ffgl_pair(A1, A2, a, b, rho_inner=1.0, max_iters=500, tol=1e-8):
    """Prox of ``a(||Z1||_F + ||Z2||_F) + b ||Z1 - Z2||_F`` for one block pair.

    Returns ``(Z1, Z2, converged)``; ``a = 0`` (diagonal blocks) is closed form.
    """
    return _fused_pair(A1, A2, a, b, fuse_frobenius, rho_inner, max_iters, tol)


def prox_ffgl2_pair(A1, A2, a, b, rho_inner=1.0, max_iters=500, tol=1e-8):
    """Prox of ``a(||Z1||_F + ||Z2||_F) + b |Z1 - Z2|_1`` for one block pair."""
    return _fused_pair(A1, A2, a, b, fuse_elementwise, rho_inner, max_iters, tol)


class _FusedProx:
    """Z-update for the two-group fused penalties, with warm-started inner state."""

    def __init__(self, problem: JfglProblem):
        pr = problem
        self.pr = pr
        # FGL works entrywise: 1x1 blocks, so the lasso covers every off-diagonal entry
        self.M = 1 if pr.penalty is Penalty.FGL else pr.M
        self.fuse = fuse_frobenius if pr.penalty is Penalty.FFGL else fuse_elementwise
        self.state: Optional[_InnerState] = None
        self.inner_converged = True

    def __call__(self, A_list, rho):
        pr, M = self.pr, self.M
        a, b = pr.lam1 / rho, pr.lam2 / rho
        B = np.stack([_to_blocks(A, M) for A in A_list])  # (2, p, p, M, M)
        p = B.shape[1]
        out = B.copy()
        diag = np.eye(p, dtype=bool)
        z1, z2 = self.fuse(B[0][diag], B[1][diag], b)
        out[0][diag], out[1][diag] = z1, z2
        iu = np.triu_indices(p, k=1)
        upper = B[:, iu[0], iu[1]]  # (2, K, M, M)
        if a == 0:
            R = np.stack(self.fuse(upper[0], upper[1], b))
            ok = True
        else:
            R, ok, self.state = _inner_admm(
                upper, a, b, self.fuse, pr.rho_inner, pr.inner_max_iters, pr.inner_tol, self.state
            )
        self.inner_converged = ok
        out[:, iu[0], iu[1]] = R
        out[:, iu[1], iu[0]] = np.swapaxes(R, -1, -2)
        return [_from_blocks(Z) for Z in out]


def solve_jfgl(problem: JfglProblem) -> List[PrecisionEstimate]:
    """Outer ADMM for the joint functional graphical lasso.

    Stops once both the primal residual ``max_q ||Theta_q - Z_q||_F`` and the
    dual residual ``rho * max_q ||Z_q - Z_q_prev||_F`` fall below ``tol``.
    With ``adaptive_rho`` the penalty parameter is doubled or halved whenever
    one residual exceeds the other tenfold.
    The reported estimate is the symmetrized split variable ``Z``, which
    carries the exact block sparsity and fusion pattern.
    """
    pr = problem
    n = pr.S_list[0].shape[0]
    Theta = [np.eye(n) for _ in range(pr.Q)]
    Z = [np.zeros((n, n)) for _ in range(pr.Q)]
    U = [np.zeros((n, n)) for _ in range(pr.Q)]
    if pr.penalty is Penalty.GFGL:
        def prox(A_list, rho):
            return prox_gfgl(A_list, pr.lam1 / rho, pr.lam2 / rho, pr.M)
        fused = None
    else:
        fused = _FusedProx(pr)
        prox = fused
    rho = pr.rho
    converged = False
    it = 0
    for it in range(1, pr.max_iters + 1):
        Theta = [theta_update(S, nq, Zq, Uq, rho) for S, nq, Zq, Uq in zip(pr.S_list, pr.n_list, Z, U)]
        Z_old = Z
        Z = prox([T + Uq for T, Uq in zip(Theta, U)], rho)
        U = [Uq + T - Zq for Uq, T, Zq in zip(U, Theta, Z)]
        primal = max(np.linalg.norm(T - Zq) for T, Zq in zip(Theta, Z))
        dual = rho * max(np.linalg.norm(Zq - Zo) for Zq, Zo in zip(Z, Z_old))
        if primal < pr.tol and dual < pr.tol and (fused is None or fused.inner_converged):
            converged = True
            break
        if pr.adaptive_rho:
            # residual balancing; the scaled dual variable moves inversely with rho
            if primal > 10 * dual:
                rho *= 2.0
                U = [Uq / 2.0 for Uq in U]
            elif dual > 10 * primal:
                rho /= 2.0
                U = [Uq * 2.0 for Uq in U]
    return [
        PrecisionEstimate(0.5 * (Zq + Zq.T), pr.M, T, it, converged)
        for Zq, T in zip(Z, Theta)
    ]


def jfgl_diff_edges(theta_x, theta_y, eps: float = 0.0, M: Optional[int] = None) -> EdgeSet:
    """Edges whose ``(j, l)`` or ``(l, j)`` block of ``theta_x - theta_y`` exceeds ``eps``."""
    if isinstance(theta_x, PrecisionEstimate):
        M = theta_x.M
        theta_x = theta_x.theta
    if isinstance(theta_y, PrecisionEstimate):
        theta_y = theta_y.theta
    if M is None:
        raise InvalidArgumentError("block size M is required for raw matrices")
    theta_x, theta_y = np.asarray(theta_x, float), np.asarray(theta_y, float)
    if theta_x.shape != theta_y.shape:
        raise ShapeError("precision matrices differ in shape")
    return EdgeSet.from_block_norms(block_norms(theta_x - theta_y, M), eps)
