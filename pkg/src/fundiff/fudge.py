"""Direct estimation of the differential graph between two score covariances.

Minimizes the penalized quadratic loss

    L(D) + lam * sum_{j,l} ||D_jl||_F,
    L(D) = tr(0.5 * SY D^T SX D - D^T (SY - SX)),

over ``pM x pM`` matrices ``D`` by proximal gradient descent with exact
block soft-thresholding, starting from ``D = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Tuple, Union

import numpy as np

from .errors import DegenerateSpectrumError, InvalidArgumentError, InvalidInputError, ShapeError
from .fpca import ScoreCovariance


@dataclass(frozen=True)
class EdgeSet:
    """Undirected edges ``(j, l)`` with ``j < l`` over nodes ``0..p-1``."""

    p: int
    edges: FrozenSet[Tuple[int, int]] = frozenset()

    def __post_init__(self):
        clean = set()
        for j, l in self.edges:
            j, l = int(j), int(l)
            if j == l:
                raise InvalidArgumentError(f"self-loop at node {j}")
            if not (0 <= j < self.p and 0 <= l < self.p):
                raise InvalidArgumentError(f"edge ({j}, {l}) outside 0..{self.p - 1}")
            clean.add((min(j, l), max(j, l)))
        object.__setattr__(self, "edges", frozenset(clean))

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(sorted(self.edges))

    def __contains__(self, edge) -> bool:
        j, l = edge
        return (min(j, l), max(j, l)) in self.edges

    @property
    def n_possible(self) -> int:
        return self.p * (self.p - 1) // 2

    def to_json(self) -> dict:
        return {"p": self.p, "edges": [[j + 1, l + 1] for j, l in self]}

    @classmethod
    def from_json(cls, obj: dict) -> "EdgeSet":
        return cls(int(obj["p"]), frozenset((j - 1, l - 1) for j, l in obj["edges"]))

    @classmethod
    def from_block_norms(cls, norms: np.ndarray, eps: float = 0.0) -> "EdgeSet":
        """Edge ``{j, l}`` whenever either ``norms[j, l]`` or ``norms[l, j]`` exceeds ``eps``."""
        big = norms > eps
        big = big | big.T
        j, l = np.nonzero(np.triu(big, k=1))
        return cls(norms.shape[0], frozenset(zip(j.tolist(), l.tolist())))


@dataclass
class FudgeConfig:
    lam: float
    #: step size; ``None`` selects ``1 / (lmax(SX) * lmax(SY))``
    eta: Optional[float] = None
    max_iters: int = 2000
    tol: float = 1e-8
    eps: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidArgumentError(f"lambda must be >= 0, got {self.lam}")
        if self.eta is not None and not self.eta > 0:
            raise InvalidArgumentError(f"step size must be > 0, got {self.eta}")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if not self.eps >= 0:
            raise InvalidArgumentError("edge threshold must be >= 0")


@dataclass
class DiffEstimate:
    delta: np.ndarray
    p: int
    M: int
    iterations: int
    objective: float
    converged: bool
    objective_history: List[float] = field(default_factory=list, repr=False)

    def block(self, j: int, l: int) -> np.ndarray:
        M = self.M
        return self.delta[j * M:(j + 1) * M, l * M:(l + 1) * M]

    def block_norms(self) -> np.ndarray:
        return block_norms(self.delta, self.M)


def _as_matrix(S) -> np.ndarray:
    return S.S if isinstance(S, ScoreCovariance) else np.asarray(S, dtype=float)


def _blocks(A: np.ndarray, M: int) -> np.ndarray:
    """View of ``A`` as a ``(p, M, p, M)`` array."""
    n = A.shape[0]
    if A.shape != (n, n) or n % M:
        raise ShapeError(f"matrix of shape {A.shape} is not made of {M}x{M} blocks")
    p = n // M
    return A.reshape(p, M, p, M)


def block_norms(A: np.ndarray, M: int) -> np.ndarray:
    """``p x p`` matrix of block Frobenius norms."""
    return np.sqrt(np.einsum("jalb,jalb->jl", _blocks(A, M), _blocks(A, M)))


def _check(delta, SX, SY):
    if not (SX.ndim == 2 and SX.shape == SY.shape == delta.shape and SX.shape[0] == SX.shape[1]):
        raise ShapeError(f"shape mismatch: delta {delta.shape}, SX {SX.shape}, SY {SY.shape}")


def loss(delta, SX, SY) -> float:
    SX, SY, delta = _as_matrix(SX), _as_matrix(SY), np.asarray(delta, float)
    _check(delta, SX, SY)
    return float(0.5 * np.sum((SX @ delta @ SY) * delta) - np.sum(delta * (SY - SX)))


def gradient(delta, SX, SY) -> np.ndarray:
    SX, SY, delta = _as_matrix(SX), _as_matrix(SY), np.asarray(delta, float)
    _check(delta, SX, SY)
    return SX @ delta @ SY - (SY - SX)


def penalty(delta: np.ndarray, M: int) -> float:
    return float(block_norms(delta, M).sum())


def default_step_size(SX, SY) -> float:
    """``1 / (lmax(SX) * lmax(SY))``, the reciprocal Lipschitz constant of the gradient."""
    SX, SY = _as_matrix(SX), _as_matrix(SY)
    lip = np.linalg.eigvalsh(SX)[-1] * np.linalg.eigvalsh(SY)[-1]
    if not lip > 1e-15:
        raise DegenerateSpectrumError(f"Lipschitz constant {lip:.3g} is numerically zero")
    return float(1.0 / lip)


def block_soft_threshold(A: np.ndarray, tau: float, M: int) -> np.ndarray:
    """Shrink every ``M x M`` block of ``A`` towards zero by ``tau`` in Frobenius norm."""
    if tau < 0:
        raise InvalidArgumentError("threshold must be >= 0")
    A = np.asarray(A, dtype=float)
    norms = block_norms(A, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > tau, 1.0 - tau / norms, 0.0)
    out = _blocks(A, M) * scale[:, None, :, None]
    return out.reshape(A.shape)


def _check_psd(S, name):
    if not np.allclose(S, S.T, atol=1e-10, rtol=0):
        raise InvalidInputError(f"{name} is not symmetric")
    lo = np.linalg.eigvalsh(S)[0]
    if lo < -1e-6:
        raise InvalidInputError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3g})")


def solve_fudge(
    SX,
    SY,
    config: FudgeConfig,
    M: Optional[int] = None,
    mask: Optional[np.ndarray] = None,
) -> DiffEstimate:
    """Proximal gradient solve of the penalized differential loss.

    Parameters
    ----------
    SX, SY : ScoreCovariance or ndarray
        Score covariances of the two populations.
    config : FudgeConfig
    M : int, optional
        Block size; taken from ``SX`` when it is a :class:`ScoreCovariance`.
    mask : ndarray of bool, optional
        ``p x p`` block pattern; blocks outside it are held at zero.

    Returns
    -------
    DiffEstimate
        Non-convergence within ``config.max_iters`` is reported through
        ``converged=False`` rather than raised.
    """
    if M is None:
        if not isinstance(SX, ScoreCovariance):
            raise InvalidArgumentError("block size M is required for raw matrices")
        M = SX.M
    SX, SY = _as_matrix(SX), _as_matrix(SY)
    delta = np.zeros_like(SX)
    _check(delta, SX, SY)
    _check_psd(SX, "SX")
    _check_psd(SY, "SY")
    p = SX.shape[0] // M
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (p, p):
            raise ShapeError(f"mask of shape {mask.shape}, expected {(p, p)}")
        keep = np.repeat(np.repeat(mask, M, axis=0), M, axis=1).astype(float)
    eta = config.eta if config.eta is not None else default_step_size(SX, SY)
    lam = config.lam
    D = SY - SX

    def objective(x):
        return 0.5 * np.sum((SX @ x @ SY) * x) - np.sum(x * D) + lam * penalty(x, M)

    obj = objective(delta)
    history = [obj]
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        A = delta - eta * (SX @ delta @ SY - D)
        new = block_soft_threshold(A, lam * eta, M)
        if mask is not None:
            new *= keep
        new_obj = objective(new)
        step = np.linalg.norm(new - delta)
        scale = max(1.0, np.linalg.norm(delta))
        delta = new
        history.append(new_obj)
        change = abs(obj - new_obj)
        obj = new_obj
        # the objective change is second order in the distance to the
        # optimum, so the iterate change must be small as well
        if change <= config.tol * max(1.0, abs(obj)) and step <= config.tol * scale:
            converged = True
            break
    return DiffEstimate(delta, p, M, it, float(obj), converged, history)


def kkt_residual(delta, SX, SY, lam: float, M: int) -> float:
    """Worst block violation of the first-order optimality conditions."""
    G = _blocks(gradient(delta, SX, SY), M)
    Dl = _blocks(np.asarray(delta, float), M)
    norms = block_norms(np.asarray(delta, float), M)
    gnorms = block_norms(gradient(delta, SX, SY), M)
    p = norms.shape[0]
    worst = 0.0
    for j in range(p):
        for l in range(p):
            if norms[j, l] > 0:
                r = np.linalg.norm(G[j, :, l, :] + lam * Dl[j, :, l, :] / norms[j, l])
            else:
                r = max(0.0, gnorms[j, l] - lam)
            worst = max(worst, r)
    return float(worst)


def lambda_max(SX, SY, M: int) -> float:
    """Smallest penalty whose solution is exactly zero."""
    return float(block_norms(_as_matrix(SY) - _as_matrix(SX), M).max())


def threshold_edges(estimate: Union[DiffEstimate, np.ndarray], eps: float = 0.0, M: Optional[int] = None) -> EdgeSet:
    if eps < 0:
        raise InvalidArgumentError("edge threshold must be >= 0")
    if isinstance(estimate, DiffEstimate):
        norms = estimate.block_norms()
    else:
        norms = block_norms(np.asarray(estimate, float), M)
    return EdgeSet.from_block_norms(norms, eps)
