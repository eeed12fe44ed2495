"""End-to-end estimation: curve fitting, pooled FPCA, scores and the graph estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .basis import BasisSystem
from .curvefit import RawDataset, fit_sample
from .errors import InvalidArgumentError
from .fpca import (
    FpcaResult,
    ScoreCovariance,
    ScoreMatrix,
    center_sample,
    compute_scores,
    pooled_fpca,
    score_covariance,
)
from .fudge import (
    DiffEstimate,
    EdgeSet,
    FudgeConfig,
    block_norms,
    lambda_max,
    solve_fudge,
    threshold_edges,
)
from .jfgl import JfglProblem, Penalty, jfgl_diff_edges, solve_jfgl
from .tuneval import multiple_baseline, snap_observations

METHODS = ("fudge", "multiple", "gfgl", "ffgl", "ffgl2", "fgl")


@dataclass
class ScoreData:
    """Everything downstream estimators need from one pair of datasets."""

    fpca: List[FpcaResult]
    scores_x: ScoreMatrix
    scores_y: ScoreMatrix
    SX: ScoreCovariance
    SY: ScoreCovariance

    @property
    def p(self) -> int:
        return self.SX.p

    @property
    def M(self) -> int:
        return self.SX.M


def project(x: RawDataset, y: RawDataset, basis: BasisSystem, M: int, center: bool = False) -> ScoreData:
    """Fit both populations, run the pooled FPCA and form the score covariances.

    ``center`` subtracts each population's mean curve first; the model
    assumes mean-zero processes, so it is off by default.
    """
    fx, fy = fit_sample(x, basis), fit_sample(y, basis)
    if center:
        fx, fy = center_sample(fx), center_sample(fy)
    fpca = pooled_fpca(fx, fy, M)
    sx, sy = compute_scores(fx, fpca, "X"), compute_scores(fy, fpca, "Y")
    return ScoreData(fpca, sx, sy, score_covariance(sx), score_covariance(sy))


def log_grid(hi: float, n: int = 30, ratio: float = 1e-2) -> np.ndarray:
    """``n`` log-spaced values from ``hi`` down to ``ratio * hi``."""
    if not hi > 0 or n < 1 or not 0 < ratio <= 1:
        raise InvalidArgumentError(f"invalid grid: hi={hi}, n={n}, ratio={ratio}")
    return np.geomspace(hi, ratio * hi, n)


def fudge_path(data: ScoreData, lam_grid: Sequence[float], eps: float = 0.0, **solver) -> List[DiffEstimate]:
    return [solve_fudge(data.SX, data.SY, FudgeConfig(float(lam), eps=eps, **solver)) for lam in lam_grid]


def jfgl_lambda2_max(data: ScoreData, penalty) -> float:
    """Scale of ``lambda2`` above which the fused or group penalty removes all differences."""
    penalty = Penalty(penalty)
    n = 0.5 * (data.scores_x.n + data.scores_y.n)
    D = data.SX.S - data.SY.S
    if penalty is Penalty.GFGL:
        stacked = np.sqrt(block_norms(data.SX.S, data.M) ** 2 + block_norms(data.SY.S, data.M) ** 2)
        np.fill_diagonal(stacked, 0.0)
        return float(n * stacked.max())
    if penalty is Penalty.FFGL:
        return float(0.5 * n * block_norms(D, data.M).max())
    return float(0.5 * n * np.abs(D).max())


def jfgl_estimate(
    data: ScoreData,
    penalty,
    lam1: float,
    lam2: float,
    rho: Optional[float] = None,
    eps: float = 0.0,
    **solver,
):
    """Joint estimate of both precision matrices and the edges of their difference.

    ``rho`` defaults to the mean sample size; the likelihood terms carry a
    factor ``n_q``, so a unit ``rho`` makes the ADMM very slow.
    """
    n_list = [data.scores_x.n, data.scores_y.n]
    if rho is None:
        rho = float(np.mean(n_list))
    problem = JfglProblem(
        [data.SX.S, data.SY.S], n_list, data.M, penalty=penalty,
        lam1=lam1, lam2=lam2, rho=rho, **solver,
    )
    tx, ty = solve_jfgl(problem)
    # edges are node pairs for every penalty, so FGL estimates are read blockwise too
    return (tx, ty), jfgl_diff_edges(tx.theta, ty.theta, eps, M=data.M)


def edges_for_method(
    method: str,
    data: ScoreData,
    grid: Sequence[float],
    x: Optional[RawDataset] = None,
    y: Optional[RawDataset] = None,
    lam1: float = 0.1,
    rho: Optional[float] = None,
    num_times: int = 15,
    fudge_opts: Optional[dict] = None,
    jfgl_opts: Optional[dict] = None,
) -> Dict[str, list]:
    """Edge sets along ``grid`` for one method, with per-point convergence flags.

    For ``fudge`` and ``multiple`` the grid is the penalty ``lambda``; for the
    joint methods it is ``lambda2`` with ``lambda1`` fixed.
    """
    fudge_opts = fudge_opts or {}
    jfgl_opts = jfgl_opts or {}
    if method == "fudge":
        path = fudge_path(data, grid, **fudge_opts)
        return {"edges": [threshold_edges(e, 0.0) for e in path], "converged": [e.converged for e in path]}
    if method == "multiple":
        if x is None or y is None:
            raise InvalidArgumentError("the multiple baseline needs the raw datasets")
        sets = multiple_baseline(x, y, grid, num_times=num_times, **fudge_opts)
        return {"edges": sets, "converged": [True] * len(sets)}
    if method in ("gfgl", "ffgl", "ffgl2", "fgl"):
        edges, conv = [], []
        for lam2 in grid:
            (tx, ty), E = jfgl_estimate(data, method, lam1, float(lam2), rho=rho, **jfgl_opts)
            edges.append(E)
            conv.append(bool(tx.converged))
        return {"edges": edges, "converged": conv}
    raise InvalidArgumentError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def default_grid(method: str, data: ScoreData, x=None, y=None, n: int = 30, ratio: float = 1e-2,
                 num_times: int = 15, lam1: float = 0.1, rho: Optional[float] = None,
                 jfgl_opts: Optional[dict] = None) -> np.ndarray:
    """Log grid starting at the smallest penalty that yields the empty graph (or its proxy)."""
    if method == "fudge":
        return log_grid(lambda_max(data.SX, data.SY, data.M), n, ratio)
    if method == "multiple":
        times = np.linspace(x.domain.lo, x.domain.hi, num_times)
        vx, vy = snap_observations(x, times), snap_observations(y, times)
        hi = 0.0
        for k in range(num_times):
            SX = vx[:, :, k].T @ vx[:, :, k] / x.n
            SY = vy[:, :, k].T @ vy[:, :, k] / y.n
            hi = max(hi, float(np.abs(SY - SX).max()))
        return log_grid(hi, n, ratio)
    return log_grid(jfgl_lambda2_top(data, method, lam1, rho, **(jfgl_opts or {})), n, ratio)


def jfgl_lambda2_top(data: ScoreData, penalty, lam1: float = 0.1, rho: Optional[float] = None,
                     max_doublings: int = 12, **solver) -> float:
    """Smallest power-of-two multiple of :func:`jfgl_lambda2_max` whose estimate has no edges.

    The closed-form scale ignores the coupling through the log-determinant,
    so it is only a starting point; if no multiple empties the graph the
    largest one tried is returned.
    """
    lam2 = jfgl_lambda2_max(data, penalty)
    for _ in range(max_doublings):
        _, E = jfgl_estimate(data, penalty, lam1, lam2, rho=rho, **solver)
        if len(E) == 0:
            break
        lam2 *= 2.0
    return lam2


def sparsity_target_lambda(
    data: ScoreData,
    target: int,
    max_bisections: int = 60,
    **solver,
):
    """Bisect ``lambda`` on a log scale until the edge count is within one of ``target``.

    Returns ``(lam, estimate, edges, hit)``; ``hit`` is False when the target
    band was not reached within ``max_bisections`` steps, in which case the
    closest count seen is returned.
    """
    if target < 0 or target > data.p * (data.p - 1) // 2:
        raise InvalidArgumentError(f"edge target {target} outside 0..{data.p * (data.p - 1) // 2}")
    hi = lambda_max(data.SX, data.SY, data.M)
    if target == 0 or hi == 0:
        est = solve_fudge(data.SX, data.SY, FudgeConfig(hi, **solver))
        E = threshold_edges(est, 0.0)
        return hi, est, E, abs(len(E) - target) <= 1
    lo = hi * 1e-6
    best = None
    for _ in range(max_bisections):
        mid = float(np.sqrt(lo * hi))
        est = solve_fudge(data.SX, data.SY, FudgeConfig(mid, **solver))
        E = threshold_edges(est, 0.0)
        if best is None or abs(len(E) - target) < abs(len(best[2]) - target):
            best = (mid, est, E)
        if abs(len(E) - target) <= 1:
            return mid, est, E, True
        if len(E) > target:
            lo = mid
        else:
            hi = mid
    return (*best, False)
