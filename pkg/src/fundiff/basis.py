"""Function bases on a closed interval and coefficient-space function algebra.

Every curve, eigenfunction and covariance kernel in an analysis is stored as
coefficients over one shared orthonormal basis, so that L2 inner products
reduce to dot products of coefficient vectors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.interpolate import BSpline

from .errors import BasisMismatchError, DomainError, InvalidArgumentError, InvalidBasisError


@dataclass(frozen=True)
class Domain:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise InvalidArgumentError(f"invalid domain [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.lo) & (t <= self.hi)

    def check(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        bad = ~self.contains(t)
        if np.any(bad):
            first = np.atleast_1d(t)[np.atleast_1d(bad)][0]
            raise DomainError(f"t={first!r} outside domain [{self.lo}, {self.hi}]")
        return t


class BasisKind(str, enum.Enum):
    FOURIER = "fourier"
    BSPLINE = "bspline"
    DISJOINT_COSINE = "disjoint_cosine"


@dataclass(frozen=True)
class BasisSystem:
    """A finite family of functions ``b_1, ..., b_L`` on ``domain``.

    Construct with :func:`make_fourier_basis`,
    :func:`make_orthonormal_bspline_basis` or :func:`disjoint_cosine_basis`
    rather than directly.
    """

    kind: BasisKind
    size: int
    domain: Domain = field(default_factory=Domain)
    degree: Optional[int] = None

    @property
    def is_orthonormal(self) -> bool:
        return self.kind is not BasisKind.DISJOINT_COSINE

    @cached_property
    def knots(self) -> Optional[np.ndarray]:
        if self.kind is not BasisKind.BSPLINE:
            return None
        k = self.degree
        lo, hi = self.domain.lo, self.domain.hi
        breaks = np.linspace(lo, hi, self.size - k + 1)
        return np.concatenate([np.full(k, lo), breaks, np.full(k, hi)])

    @cached_property
    def _orthonormalizer(self) -> np.ndarray:
        # columns hold the raw B-spline coefficients of each orthonormal function
        return _gram_schmidt(_bspline_gram(self.knots, self.degree, self.size))

    def __call__(self, t) -> np.ndarray:
        """Evaluate all basis functions; returns an array of shape ``t.shape + (L,)``."""
        t = self.domain.check(t)
        flat = np.atleast_1d(t).ravel()
        if self.kind is BasisKind.FOURIER:
            out = _fourier_values(flat, self.size, self.domain)
        elif self.kind is BasisKind.BSPLINE:
            raw = BSpline.design_matrix(flat, self.knots, self.degree, extrapolate=True).toarray()
            out = raw @ self._orthonormalizer
        else:
            out = _disjoint_cosine_values(flat, self.size)
        return out.reshape(t.shape + (self.size,))

    def gram(self) -> np.ndarray:
        """Exact Gram matrix of the basis (identity for orthonormal kinds)."""
        if self.kind is BasisKind.FOURIER:
            return np.eye(self.size)
        if self.kind is BasisKind.BSPLINE:
            C = self._orthonormalizer
            return C.T @ _bspline_gram(self.knots, self.degree, self.size) @ C
        nodes, weights = np.polynomial.legendre.leggauss(32)
        m = self.size
        G = np.zeros((m, m))
        for k in range(m):
            a, b = k / m, (k + 1) / m
            x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
            v = np.cos(2 * np.pi * m * (x - (2 * k + 1) / (2 * m))) + 1
            G[k, k] = 0.5 * (b - a) * np.sum(weights * v * v)
        return G


def make_fourier_basis(L: int, domain: Domain = Domain()) -> BasisSystem:
    """Orthonormal Fourier basis: constant, then cos/sin pairs of rising frequency."""
    if int(L) != L or L < 1:
        raise InvalidArgumentError(f"Fourier basis size must be >= 1, got {L}")
    return BasisSystem(BasisKind.FOURIER, int(L), domain)


def make_orthonormal_bspline_basis(L: int, degree: int = 3, domain: Domain = Domain()) -> BasisSystem:
    """B-splines on uniform knots, Gram-Schmidt orthonormalized in L2(domain)."""
    if int(degree) != degree or degree < 0:
        raise InvalidArgumentError(f"spline degree must be >= 0, got {degree}")
    if int(L) != L or L < degree + 1:
        raise InvalidArgumentError(f"B-spline basis of degree {degree} needs L >= {degree + 1}, got {L}")
    return BasisSystem(BasisKind.BSPLINE, int(L), domain, int(degree))


def disjoint_cosine_basis(m: int) -> BasisSystem:
    """Disjoint raised-cosine bumps on [0, 1], one per segment ``[k/m, (k+1)/m)``.

    Not orthonormal; used only to generate synthetic curves.
    """
    if int(m) != m or m < 1:
        raise InvalidArgumentError(f"number of segments must be >= 1, got {m}")
    return BasisSystem(BasisKind.DISJOINT_COSINE, int(m), Domain(0.0, 1.0))


def eval_basis(basis: BasisSystem, t: float) -> np.ndarray:
    return basis(float(t))


def _fourier_values(t, L, domain):
    width = domain.length
    x = (t - domain.lo) / width
    out = np.empty((t.size, L))
    out[:, 0] = 1.0 / np.sqrt(width)
    scale = np.sqrt(2.0 / width)
    for col in range(1, L):
        freq = (col + 1) // 2
        arg = 2 * np.pi * freq * x
        out[:, col] = scale * (np.cos(arg) if col % 2 == 1 else np.sin(arg))
    return out


def _disjoint_cosine_values(t, m):
    seg = np.minimum(np.floor(t * m).astype(int), m - 1)
    out = np.zeros((t.size, m))
    vals = np.cos(2 * np.pi * m * (t - (2 * seg + 1) / (2 * m))) + 1
    out[np.arange(t.size), seg] = vals
    return out


def _bspline_gram(knots, degree, L):
    # Gauss-Legendre with degree+1 nodes per knot span is exact for the
    # degree-2k piecewise polynomial products.
    nodes, weights = np.polynomial.legendre.leggauss(degree + 1)
    spans = np.unique(knots)
    G = np.zeros((L, L))
    for a, b in zip(spans[:-1], spans[1:]):
        x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        V = BSpline.design_matrix(x, knots, degree, extrapolate=True).toarray()
        G += (V * (0.5 * (b - a) * weights)[:, None]).T @ V
    return G


def _gram_schmidt(G):
    """Classical Gram-Schmidt (two passes) of the unit vectors in the G inner product."""
    L = G.shape[0]
    Q = np.zeros((L, L))
    for i in range(L):
        v = np.zeros(L)
        v[i] = 1.0
        for _ in range(2):
            coef = Q[:, :i].T @ (G @ v)
            v = v - Q[:, :i] @ coef
        norm = np.sqrt(v @ G @ v)
        if norm <= 1e-14:
            raise InvalidBasisError("B-spline functions are numerically dependent")
        Q[:, i] = v / norm
    return Q


@dataclass(frozen=True, eq=False)
class FunctionRep:
    """A curve ``sum_l coeffs[l] * b_l(t)``."""

    basis: BasisSystem
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.basis.size,):
            raise InvalidArgumentError(
                f"coefficient vector of shape {coeffs.shape} does not match basis size {self.basis.size}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def __call__(self, t) -> np.ndarray:
        return self.basis(t) @ self.coeffs


def check_same_orthonormal(a: BasisSystem, b: BasisSystem) -> None:
    if a != b:
        raise BasisMismatchError(f"basis mismatch: {a} vs {b}")
    if not a.is_orthonormal:
        raise InvalidBasisError(f"{a.kind.value} basis is not orthonormal")


def inner_product(f: FunctionRep, g: FunctionRep) -> float:
    """L2 inner product, exact through orthonormality of the shared basis."""
    check_same_orthonormal(f.basis, g.basis)
    return float(f.coeffs @ g.coeffs)
