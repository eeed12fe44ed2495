"""Tuning-parameter selection, the pointwise baseline and ROC evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .basis import BasisKind, BasisSystem, make_fourier_basis, make_orthonormal_bspline_basis
from .curvefit import RawDataset, fit_sample
from .errors import InvalidArgumentError, ShapeError, UndefinedRateError
from .fpca import ScoreMatrix, pooled_fpca, score_covariance
from .fudge import EdgeSet, FudgeConfig, loss, solve_fudge, threshold_edges
from .simgen import rng_for

__all__ = [
    "RocCurve",
    "TuneResult",
    "roc_from_lambda_sweep",
    "roc_from_edge_sets",
    "auc",
    "scv_select_lambda",
    "cv_select_dims",
    "multiple_baseline",
    "make_basis",
    "snap_observations",
]


@dataclass
class RocCurve:
    """Edge-recovery rates along a swept tuning parameter.

    ``points`` holds ``(fpr, tpr, param)`` in the order of the sweep.
    """

    points: List[Tuple[float, float, float]]
    positives: int
    negatives: int

    def __post_init__(self):
        for fpr, tpr, _ in self.points:
            if not (0.0 <= fpr <= 1.0 and 0.0 <= tpr <= 1.0):
                raise InvalidArgumentError(f"rate outside [0, 1]: ({fpr}, {tpr})")

    @property
    def fpr(self) -> np.ndarray:
        return np.array([pt[0] for pt in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([pt[1] for pt in self.points])

    def envelope(self) -> Tuple[np.ndarray, np.ndarray]:
        """FPR-sorted points with the running maximum of TPR."""
        order = np.lexsort((self.tpr, self.fpr))
        return self.fpr[order], np.maximum.accumulate(self.tpr[order])


@dataclass
class TuneResult:
    #: selected value: ``lam`` for SCV, ``(L, M)`` for dimension selection
    chosen: object
    #: mean CV score per candidate
    scores: Dict[object, float] = field(default_factory=dict)
    #: per-fold scores per candidate
    fold_scores: Dict[object, List[float]] = field(default_factory=dict, repr=False)


def _rates(est: EdgeSet, truth: EdgeSet) -> Tuple[float, float]:
    pos = len(truth)
    neg = truth.n_possible - pos
    tp = len(est.edges & truth.edges)
    fp = len(est.edges - truth.edges)
    fpr = fp / neg if neg else 0.0
    return fpr, tp / pos


def roc_from_edge_sets(edge_sets: Sequence[EdgeSet], params: Sequence[float], truth: EdgeSet) -> RocCurve:
    """ROC points for precomputed estimates, one per swept parameter value."""
    if len(truth) == 0:
        raise UndefinedRateError("true edge set is empty; the true positive rate is undefined")
    if len(edge_sets) != len(params) or not len(params):
        raise InvalidArgumentError("need one edge set per parameter value, and at least one")
    points = []
    for est, lam in zip(edge_sets, params):
        if est.p != truth.p:
            raise ShapeError(f"estimate over {est.p} nodes, truth over {truth.p}")
        fpr, tpr = _rates(est, truth)
        points.append((fpr, tpr, float(lam)))
    return RocCurve(points, len(truth), truth.n_possible - len(truth))


def roc_from_lambda_sweep(
    estimator: Callable[[float], EdgeSet],
    lam_grid: Sequence[float],
    truth: EdgeSet,
    p: Optional[int] = None,
) -> RocCurve:
    """Evaluate ``estimator`` along ``lam_grid`` against the true edges.

    TPR is ``|E_hat & E| / |E|`` and FPR is ``|E_hat - E| / (p(p-1)/2 - |E|)``.
    """
    if p is not None and p != truth.p:
        raise ShapeError(f"truth is over {truth.p} nodes, expected {p}")
    if len(truth) == 0:
        raise UndefinedRateError("true edge set is empty; the true positive rate is undefined")
    lam_grid = list(lam_grid)
    if not lam_grid:
        raise InvalidArgumentError("lambda grid is empty")
    return roc_from_edge_sets([estimator(lam) for lam in lam_grid], lam_grid, truth)


def auc(roc: RocCurve) -> float:
    """Trapezoid area under the FPR-sorted unique points, padded with (0,0) and (1,1)."""
    if len(roc.points) < 2:
        raise InvalidArgumentError("area under the curve needs at least two points")
    pts = {(0.0, 0.0), (1.0, 1.0)} | {(float(f), float(t)) for f, t, _ in roc.points}
    pts = np.array(sorted(pts))
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


# ---------------------------------------------------------------------------
# selective cross-validation for lambda


def _fold_ids(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    ids = np.empty(n, dtype=int)
    ids[rng.permutation(n)] = np.arange(n) % folds
    return ids


def scv_select_lambda(
    scoresX: ScoreMatrix,
    scoresY: ScoreMatrix,
    lam_grid: Sequence[float],
    folds: int = 5,
    seed: int = 0,
    max_iters: int = 2000,
    tol: float = 1e-8,
) -> TuneResult:
    """Selective cross-validation of the FuDGE penalty.

    For every ``lam`` the block pattern is estimated once on all samples.
    Each fold then refits on the training samples with the pattern fixed
    (blocks outside it held at zero, no penalty inside it) and scores the
    unpenalized loss against the held-out score covariances. Refitting
    without the penalty keeps the shrinkage of small ``lam`` values from
    masking the extra free blocks. Ties go to the larger ``lam``.
    """
    lam_grid = [float(v) for v in lam_grid]
    if not lam_grid:
        raise InvalidArgumentError("lambda grid is empty")
    if folds < 2 or min(scoresX.n, scoresY.n) < 2 * folds:
        raise InvalidArgumentError(
            f"{folds}-fold selection needs at least 2 samples per fold "
            f"(have {scoresX.n} and {scoresY.n})"
        )
    M = scoresX.M
    SX, SY = score_covariance(scoresX), score_covariance(scoresY)
    idx_x = _fold_ids(scoresX.n, folds, rng_for(seed, 0))
    idx_y = _fold_ids(scoresY.n, folds, rng_for(seed, 1))
    splits = []
    for k in range(folds):
        splits.append((
            score_covariance(scoresX.subset(np.flatnonzero(idx_x != k))).S,
            score_covariance(scoresY.subset(np.flatnonzero(idx_y != k))).S,
            score_covariance(scoresX.subset(np.flatnonzero(idx_x == k))).S,
            score_covariance(scoresY.subset(np.flatnonzero(idx_y == k))).S,
        ))
    result = TuneResult(None)
    refit = FudgeConfig(0.0, max_iters=max_iters, tol=tol)
    for lam in lam_grid:
        full = solve_fudge(SX, SY, FudgeConfig(lam, max_iters=max_iters, tol=tol))
        pattern = full.block_norms() > 0
        losses = []
        for trX, trY, teX, teY in splits:
            if pattern.any():
                est = solve_fudge(trX, trY, refit, M=M, mask=pattern).delta
            else:
                est = np.zeros_like(trX)
            losses.append(loss(est, teX, teY))
        result.fold_scores[lam] = losses
        result.scores[lam] = float(np.mean(losses))
    best = min(result.scores.values())
    result.chosen = max(lam for lam, s in result.scores.items() if s <= best)
    return result


# ---------------------------------------------------------------------------
# cross-validation of the basis size and number of components


def make_basis(kind, L: int, domain=None) -> BasisSystem:
    kind = BasisKind(kind)
    kw = {} if domain is None else {"domain": domain}
    if kind is BasisKind.BSPLINE:
        return make_orthonormal_bspline_basis(L, **kw)
    if kind is BasisKind.FOURIER:
        return make_fourier_basis(L, **kw)
    raise InvalidArgumentError(f"{kind.value} is not an estimation basis")


def _split_observations(data: RawDataset, folds: int, seed: int):
    """Per-curve assignment of observation indices to folds.

    Curves with the same number of observations share one assignment, so
    curves on a common grid keep a common training grid.
    """
    cache: Dict[int, np.ndarray] = {}
    out = []
    for row in data.observations:
        ids_row = []
        for t, _ in row:
            T = t.size
            if T not in cache:
                cache[T] = _fold_ids(T, folds, rng_for(seed, 2, T))
            ids_row.append(cache[T])
        out.append(ids_row)
    return out


def _take(data: RawDataset, ids, k: int, keep: bool) -> RawDataset:
    obs = []
    for row, ids_row in zip(data.observations, ids):
        sel = [(t[(f != k) if keep else (f == k)], h[(f != k) if keep else (f == k)])
               for (t, h), f in zip(row, ids_row)]
        obs.append(sel)
    return RawDataset(obs, data.domain)


def cv_select_dims(
    rawX: RawDataset,
    rawY: RawDataset,
    L_grid: Sequence[int],
    M_grid: Sequence[int],
    folds: int = 5,
    seed: int = 0,
    basis_kind: str = "bspline",
) -> TuneResult:
    """Cross-validated choice of the basis size ``L`` and the number of components ``M``.

    Observation points within each curve are split into folds. For each
    fold, curves are fitted on the remaining points, the pooled FPCA is
    computed from those fits, and every curve is reconstructed from its
    first ``M`` scores; the score is the squared reconstruction error at
    the held-out points, summed over curves. Pairs with ``M > L`` are
    skipped. Near ties (relative ``1e-9``) go to the smaller ``(L, M)``.

    Raises
    ------
    UnderdeterminedError
        If a training grid has fewer points than ``L``.
    """
    L_grid = sorted({int(v) for v in L_grid})
    M_grid = sorted({int(v) for v in M_grid})
    if not L_grid or not M_grid:
        raise InvalidArgumentError("L and M grids must be nonempty")
    if folds < 2:
        raise InvalidArgumentError("need at least two folds")
    if rawX.p != rawY.p:
        raise ShapeError(f"populations have {rawX.p} and {rawY.p} nodes")
    ids_x = _split_observations(rawX, folds, seed)
    ids_y = _split_observations(rawY, folds, seed)
    result = TuneResult(None)
    for k in range(folds):
        trX, teX = _take(rawX, ids_x, k, True), _take(rawX, ids_x, k, False)
        trY, teY = _take(rawY, ids_y, k, True), _take(rawY, ids_y, k, False)
        for L in L_grid:
            Ms = [M for M in M_grid if M <= L]
            if not Ms:
                continue
            basis = make_basis(basis_kind, L, rawX.domain)
            fx, fy = fit_sample(trX, basis), fit_sample(trY, basis)
            fpca = pooled_fpca(fx, fy, max(Ms))
            for M in Ms:
                err = _holdout_error(fx, teX, fpca, M) + _holdout_error(fy, teY, fpca, M)
                result.fold_scores.setdefault((L, M), []).append(err)
    result.scores = {key: float(np.mean(v)) for key, v in result.fold_scores.items()}
    if not result.scores:
        raise InvalidArgumentError("no candidate with M <= L")
    best = min(result.scores.values())
    tie = 1e-9 * max(abs(best), 1e-300) + 1e-14
    result.chosen = min(key for key, s in result.scores.items() if s <= best + tie)
    return result


def _holdout_error(fitted, test: RawDataset, fpca, M) -> float:
    basis = fitted.basis
    design: Dict[bytes, np.ndarray] = {}
    total = 0.0
    for j in range(fitted.p):
        Phi = fpca[j].eigenvectors[:, :M]
        proj = fitted.coeffs[:, j, :] @ Phi @ Phi.T  # (n, L)
        for i in range(fitted.n):
            t, h = test.observations[i][j]
            if t.size:
                key = t.tobytes()
                if key not in design:
                    design[key] = basis(t)
                total += float(np.sum((design[key] @ proj[i] - h) ** 2))
    return total


# ---------------------------------------------------------------------------
# pointwise "multiple" baseline


def snap_observations(data: RawDataset, times: np.ndarray) -> np.ndarray:
    """Values at the observation nearest to each requested time, shape ``(n, p, K)``."""
    out = np.empty((data.n, data.p, times.size))
    for i, row in enumerate(data.observations):
        for j, (t, h) in enumerate(row):
            if t.size < times.size:
                raise InvalidArgumentError(
                    f"curve ({i}, {j}) has {t.size} observations, fewer than {times.size} requested times"
                )
            pos = np.clip(np.searchsorted(t, times), 1, t.size - 1)
            left = t[pos - 1]
            right = t[pos]
            pick = np.where(times - left <= right - times, pos - 1, pos)
            out[i, j] = h[pick]
    return out


def multiple_baseline(
    rawX: RawDataset,
    rawY: RawDataset,
    lam_grid: Sequence[float],
    num_times: int = 15,
    max_iters: int = 2000,
    tol: float = 1e-8,
) -> List[EdgeSet]:
    """Majority vote of vector-valued differential graphs at evenly spaced times.

    At each of ``num_times`` equally spaced times (end points included) the
    nearest observation of every curve forms a ``p``-vector per sample; the
    direct-difference estimator with ``M = 1`` is run on the two uncentered
    sample covariances. An edge is kept when it appears at more than half of
    the time points.
    """
    if num_times < 1:
        raise InvalidArgumentError("need at least one time point")
    if rawX.p != rawY.p:
        raise ShapeError(f"populations have {rawX.p} and {rawY.p} nodes")
    lam_grid = [float(v) for v in lam_grid]
    times = np.linspace(rawX.domain.lo, rawX.domain.hi, num_times)
    vx, vy = snap_observations(rawX, times), snap_observations(rawY, times)
    p = rawX.p
    votes = np.zeros((len(lam_grid), p, p), dtype=int)
    for k in range(num_times):
        SX = vx[:, :, k].T @ vx[:, :, k] / rawX.n
        SY = vy[:, :, k].T @ vy[:, :, k] / rawY.n
        for g, lam in enumerate(lam_grid):
            est = solve_fudge(SX, SY, FudgeConfig(lam, max_iters=max_iters, tol=tol), M=1)
            E = threshold_edges(est, 0.0)
            for j, l in E:
                votes[g, j, l] += 1
    need = num_times // 2 + 1
    return [EdgeSet.from_block_norms((votes[g] >= need).astype(float), 0.0) for g in range(len(lam_grid))]
