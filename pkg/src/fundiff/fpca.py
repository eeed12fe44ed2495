"""Pooled covariance kernels, functional PCA and projection-score covariances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .basis import BasisSystem, FunctionRep, check_same_orthonormal
from .curvefit import FittedSample
from .errors import InvalidArgumentError, ShapeError


@dataclass(frozen=True, eq=False)
class CovKernel:
    """Kernel ``K(s, t) = b(s)^T matrix b(t)`` for one node."""

    node: int
    basis: BasisSystem
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class FpcaResult:
    node: int
    basis: BasisSystem
    eigenvalues: np.ndarray
    #: eigenfunction coefficients, one column per component (L x M)
    eigenvectors: np.ndarray

    @property
    def M(self) -> int:
        return self.eigenvalues.size

    def eigenfunction(self, k: int) -> FunctionRep:
        return FunctionRep(self.basis, self.eigenvectors[:, k])


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    tag: str
    #: scores[i, j, k] = <X_ij, phi_jk>
    scores: np.ndarray

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def p(self) -> int:
        return self.scores.shape[1]

    @property
    def M(self) -> int:
        return self.scores.shape[2]

    def stacked(self) -> np.ndarray:
        """Per-sample score vectors of length ``p*M`` (node-major)."""
        return self.scores.reshape(self.n, -1)

    def subset(self, samples) -> "ScoreMatrix":
        return ScoreMatrix(self.tag, self.scores[np.asarray(samples)])


@dataclass(frozen=True, eq=False)
class ScoreCovariance:
    tag: str
    S: np.ndarray
    p: int
    M: int

    def block(self, j: int, l: int) -> np.ndarray:
        M = self.M
        return self.S[j * M:(j + 1) * M, l * M:(l + 1) * M]


def center_sample(fitted: FittedSample) -> FittedSample:
    """Subtract the sample mean curve at every node."""
    return FittedSample(fitted.basis, fitted.coeffs - fitted.coeffs.mean(axis=0, keepdims=True))


def estimate_cov_kernel(fittedX: FittedSample, fittedY: FittedSample, j: int) -> CovKernel:
    """Sum of the two populations' uncentered covariance kernels at node ``j``."""
    check_same_orthonormal(fittedX.basis, fittedY.basis)
    if fittedX.n < 1 or fittedY.n < 1:
        raise InvalidArgumentError("each population needs at least one sample")
    bx = fittedX.coeffs[:, j, :]
    by = fittedY.coeffs[:, j, :]
    K = bx.T @ bx / fittedX.n + by.T @ by / fittedY.n
    K = 0.5 * (K + K.T)
    return CovKernel(j, fittedX.basis, K)


def fpca_decompose(K: CovKernel, M: int) -> FpcaResult:
    """Leading ``M`` eigenpairs of a kernel.

    With an orthonormal basis the integral eigenproblem is the matrix
    eigenproblem of ``K.matrix``. Eigenvectors are signed so their largest
    magnitude entry is positive; exactly tied eigenvalues are ordered by the
    signed eigenvectors, lexicographically descending.
    """
    L = K.matrix.shape[0]
    if int(M) != M or M < 1 or M > L:
        raise InvalidArgumentError(f"need 1 <= M <= L={L}, got M={M}")
    w, V = np.linalg.eigh(K.matrix)
    for k in range(L):
        v = V[:, k]
        if v[np.argmax(np.abs(v))] < 0:
            V[:, k] = -v
    order = sorted(range(L), key=lambda k: (-w[k], tuple(-V[:, k])))[:M]
    lam = w[order]
    lam = np.where((lam < 0) & (lam >= -1e-10), 0.0, lam)
    return FpcaResult(K.node, K.basis, lam, V[:, order].copy())


def pooled_fpca(fittedX: FittedSample, fittedY: FittedSample, M: int) -> List[FpcaResult]:
    return [fpca_decompose(estimate_cov_kernel(fittedX, fittedY, j), M) for j in range(fittedX.p)]


def compute_scores(fitted: FittedSample, fpca: Sequence[FpcaResult], tag: str = "X") -> ScoreMatrix:
    """Projection scores of every fitted curve onto its node's eigenfunctions."""
    if len(fpca) != fitted.p:
        raise ShapeError(f"{len(fpca)} FPCA results for {fitted.p} nodes")
    Ms = {f.M for f in fpca}
    if len(Ms) != 1:
        raise ShapeError("all nodes must keep the same number of components")
    for f in fpca:
        check_same_orthonormal(fitted.basis, f.basis)
    Phi = np.stack([f.eigenvectors for f in fpca])  # (p, L, M)
    scores = np.einsum("ijl,jlk->ijk", fitted.coeffs, Phi)
    return ScoreMatrix(tag, scores)


def score_covariance(scores: ScoreMatrix) -> ScoreCovariance:
    """Uncentered covariance ``(1/n) sum_i a_i a_i^T`` of the stacked score vectors."""
    if scores.n < 1:
        raise ShapeError("need at least one sample")
    A = scores.stacked()
    S = A.T @ A / scores.n
    S = 0.5 * (S + S.T)
    return ScoreCovariance(scores.tag, S, scores.p, scores.M)
