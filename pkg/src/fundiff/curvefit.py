"""Least-squares reconstruction of curves from noisy discrete observations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .basis import BasisSystem, Domain, FunctionRep
from .errors import (
    ConditioningError,
    DataError,
    DomainError,
    InvalidArgumentError,
    ShapeError,
    UnderdeterminedError,
)

#: Largest accepted condition number of ``B^T B``.
MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Discretely observed curves for one population.

    ``observations[i][j]`` is a ``(times, values)`` pair of 1-D arrays for
    sample ``i`` and node ``j`` (both 0-based here; 1-based in CSV files).
    """

    observations: tuple
    domain: Domain = Domain()

    def __post_init__(self):
        obs = tuple(tuple((np.asarray(t, float), np.asarray(h, float)) for t, h in row) for row in self.observations)
        if not obs or not obs[0]:
            raise ShapeError("dataset needs at least one sample and one node")
        p = len(obs[0])
        for i, row in enumerate(obs):
            if len(row) != p:
                raise ShapeError(f"sample {i} has {len(row)} nodes, expected {p}")
            for j, (t, h) in enumerate(row):
                if t.ndim != 1 or t.shape != h.shape or t.size == 0:
                    raise ShapeError(f"curve ({i}, {j}): times and values must be equal-length nonempty vectors")
                if np.any(np.diff(t) <= 0):
                    raise DataError(f"curve ({i}, {j}): times must be strictly increasing")
                if not np.all(np.isfinite(h)):
                    raise DataError(f"curve ({i}, {j}): non-finite observation")
                if not np.all(self.domain.contains(t)):
                    raise DomainError(f"curve ({i}, {j}): times outside [{self.domain.lo}, {self.domain.hi}]")
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return len(self.observations)

    @property
    def p(self) -> int:
        return len(self.observations[0])

    @classmethod
    def from_grid(cls, times, values, domain: Domain = Domain()) -> "RawDataset":
        """Build from a shared grid; ``values`` has shape ``(n, p, T)``."""
        times = np.asarray(times, float)
        values = np.asarray(values, float)
        if values.ndim != 3 or values.shape[2] != times.size:
            raise ShapeError(f"values of shape {values.shape} do not match {times.size} time points")
        obs = [[(times, values[i, j]) for j in range(values.shape[1])] for i in range(values.shape[0])]
        return cls(obs, domain)

    def subset(self, samples: Sequence[int]) -> "RawDataset":
        return RawDataset([self.observations[i] for i in samples], self.domain)

    def equals(self, other: "RawDataset") -> bool:
        if self.domain != other.domain or self.n != other.n or self.p != other.p:
            return False
        return all(
            np.array_equal(t1, t2) and np.array_equal(h1, h2)
            for r1, r2 in zip(self.observations, other.observations)
            for (t1, h1), (t2, h2) in zip(r1, r2)
        )


@dataclass(frozen=True, eq=False)
class FittedSample:
    """Fitted coefficients, array of shape ``(n, p, L)`` over one basis."""

    basis: BasisSystem
    coeffs: np.ndarray

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def p(self) -> int:
        return self.coeffs.shape[1]

    def curve(self, i: int, j: int) -> FunctionRep:
        return FunctionRep(self.basis, self.coeffs[i, j])

    def subset(self, samples) -> "FittedSample":
        return FittedSample(self.basis, self.coeffs[np.asarray(samples)])


def design_matrix(basis: BasisSystem, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise InvalidArgumentError("design matrix needs a nonempty 1-D vector of times")
    return basis(times)


class _LeastSquares:
    """Pivoted-QR least-squares solver for one design matrix."""

    def __init__(self, B: np.ndarray):
        T, L = B.shape
        if T < L:
            raise UnderdeterminedError(T, L)
        sv = linalg.svdvals(B)
        cond = np.inf if sv[-1] == 0 else (sv[0] / sv[-1]) ** 2
        if not cond < MAX_CONDITION:
            raise ConditioningError(T, L, cond)
        self.cond = cond
        self.Q, self.R, self.perm = linalg.qr(B, mode="economic", pivoting=True)

    def solve(self, H: np.ndarray) -> np.ndarray:
        """Coefficients for each column of ``H`` (shape ``(T, k)``), shape ``(L, k)``."""
        z = linalg.solve_triangular(self.R, self.Q.T @ H)
        out = np.empty_like(z)
        out[self.perm] = z
        return out


def fit_curve(times, values, basis: BasisSystem) -> FunctionRep:
    """Least-squares basis coefficients for one discretely observed curve."""
    values = np.asarray(values, dtype=float)
    B = design_matrix(basis, times)
    if values.shape != (B.shape[0],):
        raise ShapeError(f"{values.size} values for {B.shape[0]} times")
    beta = _LeastSquares(B).solve(values[:, None])[:, 0]
    return FunctionRep(basis, beta)


def fit_sample(data: RawDataset, basis: BasisSystem) -> FittedSample:
    """Fit every curve of ``data``; curves sharing a time grid share one factorization."""
    if data.domain != basis.domain:
        raise DomainError(f"dataset domain {data.domain} differs from basis domain {basis.domain}")
    coeffs = np.empty((data.n, data.p, basis.size))
    groups: dict = {}
    for i, row in enumerate(data.observations):
        for j, (t, _) in enumerate(row):
            groups.setdefault(t.tobytes(), []).append((i, j))
    for members in groups.values():
        i0, j0 = members[0]
        t = data.observations[i0][j0][0]
        try:
            solver = _LeastSquares(design_matrix(basis, t))
        except UnderdeterminedError as exc:
            raise UnderdeterminedError(exc.n_obs, exc.n_basis, location=(i0, j0)) from None
        except ConditioningError as exc:
            raise ConditioningError(exc.n_obs, exc.n_basis, exc.cond, location=(i0, j0)) from None
        H = np.column_stack([data.observations[i][j][1] for i, j in members])
        beta = solver.solve(H)
        for col, (i, j) in enumerate(members):
            coeffs[i, j] = beta[:, col]
    return FittedSample(basis, coeffs)
