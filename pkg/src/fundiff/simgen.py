"""Synthetic two-population functional data with known differential graphs.

Precision matrices are ``mp x mp`` with ``m x m`` blocks, node-major: the
coefficients of node ``j`` occupy rows ``j*m .. (j+1)*m - 1``. Curves are
``X_ij(t) = b'(t)^T delta_ij`` for the disjoint raised-cosine basis ``b'``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np
from scipy import linalg

from .basis import BasisSystem, BasisKind, disjoint_cosine_basis
from .curvefit import RawDataset
from .errors import FactorizationError, InvalidArgumentError
from .fudge import EdgeSet, block_norms

__all__ = [
    "Model",
    "SimConfig",
    "PrecisionPair",
    "disjoint_cosine_basis",
    "gen_model1",
    "gen_model2",
    "gen_model3",
    "generate_pair",
    "sample_functional_data",
    "simulate_populations",
    "draw_coefficients",
    "model3_constants",
    "true_diff_edges",
    "rng_for",
]

MIN_EIGENVALUE = 0.05

# population codes used when splitting the seed
POP_X, POP_Y, POP_GRAPH = 0, 1, 2


class Model(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"


@dataclass(frozen=True)
class SimConfig:
    model: Model = Model.M2
    p: int = 30
    m: int = 5
    n: int = 100
    T: int = 200
    noise_sd: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if min(self.p, self.m, self.n, self.T) < 1 or self.noise_sd < 0:
            raise InvalidArgumentError(f"invalid simulation settings {self}")


@dataclass(frozen=True, eq=False)
class PrecisionPair:
    omega_x: np.ndarray
    omega_y: np.ndarray
    p: int
    m: int
    #: diagonal shift added to both matrices
    shift: float = 0.0

    @property
    def edges(self) -> EdgeSet:
        return true_diff_edges(self)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one ``(seed, key...)`` stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def _block_eye(m, value):
    return value * np.eye(m)


def _set_block(A, j, l, m, B):
    A[j * m:(j + 1) * m, l * m:(l + 1) * m] = B


def _get_block(A, j, l, m):
    return A[j * m:(j + 1) * m, l * m:(l + 1) * m]


def _shift_pd(star_x, star_y):
    lo = min(np.linalg.eigvalsh(star_x)[0], np.linalg.eigvalsh(star_y)[0], 0.0)
    delta = abs(lo) + MIN_EIGENVALUE
    eye = np.eye(star_x.shape[0])
    return star_x + delta * eye, star_y + delta * eye, delta


def _uniform_pm(rng, lo=0.2, hi=0.5):
    return rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi)


def _band_w(m, c, band):
    k = np.arange(m)
    return np.where(np.abs(k[:, None] - k[None, :]) <= band, 0.0, c)


def _model1_scale(p):
    table = {30: 1 / 2, 60: 1 / 3, 90: 1 / 4, 120: 1 / 5}
    return table.get(p, 1.0 / math.ceil(p / 30 + 1))


def _power_law_graph(p, n_edges, rng):
    """Preferential-attachment graph trimmed or padded to exactly ``n_edges`` edges."""
    k = max(1, min(p - 1, round(n_edges / p)))
    G = nx.barabasi_albert_graph(p, k, seed=int(rng.integers(2**31)))
    edges = sorted((min(a, b), max(a, b)) for a, b in G.edges())
    while len(edges) > n_edges:
        edges.pop(int(rng.integers(len(edges))))
    present = set(edges)
    deg = np.zeros(p)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    while len(present) < n_edges:
        w = (deg + 1) / (deg + 1).sum()
        a, b = rng.choice(p, size=2, replace=False, p=w)
        e = (min(a, b), max(a, b))
        if e not in present:
            present.add(e)
            deg[a] += 1
            deg[b] += 1
    return sorted(present)


def gen_model1(p: int, m: int = 5, seed: int = 0) -> PrecisionPair:
    """Power-law graph; the two top hubs get perturbed edges in ``Omega_Y``."""
    if p < 3:
        raise InvalidArgumentError("model 1 needs p >= 3 (two hubs plus a neighbour)")
    rng = rng_for(seed, POP_GRAPH)
    n_edges = round(p * (p - 1) / 10)
    edges = _power_law_graph(p, n_edges, rng)
    scale = _model1_scale(p)
    star_x = np.zeros((p * m, p * m))
    for j, l in edges:
        # each ordered block draws its own value; averaging with the transpose below
        _set_block(star_x, j, l, m, _block_eye(m, scale * _uniform_pm(rng)))
        _set_block(star_x, l, j, m, _block_eye(m, scale * _uniform_pm(rng)))
    star_x = 0.5 * (star_x + star_x.T)
    star_x[np.diag_indices_from(star_x)] = 1.0

    deg = np.zeros(p, dtype=int)
    for j, l in edges:
        deg[j] += 1
        deg[l] += 1
    hubs = sorted(range(p), key=lambda v: (-deg[v], v))[:2]
    norms = block_norms(star_x, m)
    chosen = []
    for h in hubs:
        incident = [e for e in edges if h in e]
        incident.sort(key=lambda e: (-norms[e], e))
        take = math.ceil(0.2 * len(incident))
        chosen.extend(incident[:take])
    star_y = star_x.copy()
    for j, l in sorted(set(chosen)):
        W = _band_w(m, _uniform_pm(rng), 2)
        _set_block(star_y, j, l, m, _get_block(star_x, j, l, m) + W)
        _set_block(star_y, l, j, m, _get_block(star_x, l, j, m) + W.T)
    ox, oy, delta = _shift_pd(star_x, star_y)
    return PrecisionPair(ox, oy, p, m, delta)


def gen_model2(p: int, m: int = 5) -> PrecisionPair:
    """Banded block-tridiagonal ``Omega_X``; ``Omega_Y`` adds edges ``(j, j+3)``, j = 1..4."""
    if p < 7:
        raise InvalidArgumentError("model 2 needs p >= 7")
    star_x = np.zeros((p * m, p * m))
    for j in range(p):
        _set_block(star_x, j, j, m, np.eye(m))
        for off, val in ((1, 0.6), (2, 0.4)):
            if j + off < p:
                _set_block(star_x, j, j + off, m, _block_eye(m, val))
                _set_block(star_x, j + off, j, m, _block_eye(m, val))
    star_y = star_x.copy()
    W = np.full((m, m), 0.1)
    for j in range(4):
        _set_block(star_y, j, j + 3, m, W)
        _set_block(star_y, j + 3, j, m, W.T)
    ox, oy, delta = _shift_pd(star_x, star_y)
    return PrecisionPair(ox, oy, p, m, delta)


def model3_constants(p: int):
    """Number of added edges ``s`` and perturbation size ``c`` for model 3."""
    table = {30: (3, 2 / 5), 60: (4, 4 / 15), 90: (5, 1 / 5), 120: (6, 4 / 25)}
    if p in table:
        return table[p]
    s = 2 + math.ceil(p / 30)
    return s, 4 / (5 * (s - 1))


def gen_model3(p: int, m: int = 5, seed: int = 0, max_tries: int = 1000) -> PrecisionPair:
    """Dense Erdos-Renyi ``Omega_X``; ``Omega_Y`` gains ``s`` new banded-W edges."""
    if p < 4:
        raise InvalidArgumentError("model 3 needs p >= 4")
    rng = rng_for(seed, POP_GRAPH)
    s, c = model3_constants(p)
    for _ in range(max_tries):
        iu = np.triu_indices(p, k=1)
        present = rng.random(iu[0].size) < 0.8
        absent = [(int(j), int(l)) for j, l, on in zip(iu[0], iu[1], present) if not on]
        if len(absent) >= s:
            break
    else:
        raise InvalidArgumentError(f"could not draw a graph with {s} free vertex pairs for p={p}")
    star_x = np.zeros((p * m, p * m))
    for j in range(p):
        _set_block(star_x, j, j, m, np.eye(m))
    for j, l, on in zip(iu[0], iu[1], present):
        if on:
            _set_block(star_x, j, l, m, _block_eye(m, 0.1))
            _set_block(star_x, l, j, m, _block_eye(m, 0.1))
    star_y = star_x.copy()
    W = _band_w(m, c, 1)
    for idx in sorted(rng.choice(len(absent), size=s, replace=False)):
        j, l = absent[idx]
        _set_block(star_y, j, l, m, W)
        _set_block(star_y, l, j, m, W.T)
    ox, oy, delta = _shift_pd(star_x, star_y)
    return PrecisionPair(ox, oy, p, m, delta)


def generate_pair(config: SimConfig, replicate: int = 0) -> PrecisionPair:
    if config.model is Model.M1:
        return gen_model1(config.p, config.m, seed=_graph_seed(config, replicate))
    if config.model is Model.M2:
        return gen_model2(config.p, config.m)
    return gen_model3(config.p, config.m, seed=_graph_seed(config, replicate))


def _graph_seed(config, replicate):
    return int(np.random.SeedSequence(config.seed, spawn_key=(replicate,)).generate_state(1)[0])


def draw_coefficients(omega: np.ndarray, n: int, rngs) -> np.ndarray:
    """``n`` draws from ``N(0, omega^{-1})``, one generator per draw."""
    try:
        C = linalg.cholesky(omega, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError(f"precision matrix is not positive definite: {exc}") from None
    Z = np.stack([rng.standard_normal(omega.shape[0]) for rng in rngs[:n]])
    # omega = C C^T, so C^{-T} z has covariance omega^{-1}
    return linalg.solve_triangular(C, Z.T, lower=True, trans="T").T


def sample_functional_data(
    omega: np.ndarray,
    basis: BasisSystem,
    n: int,
    T: int = 200,
    noise_sd: float = 0.5,
    seed: int = 0,
    population: int = POP_X,
    replicate: int = 0,
    return_coefficients: bool = False,
):
    """Noisy observations of ``n`` sampled curve vectors on ``T`` evenly spaced points.

    Sample ``i`` uses its own stream keyed by ``(replicate, population, i)``,
    which draws the coefficient vector first and then the noise.
    """
    if basis.kind is not BasisKind.DISJOINT_COSINE:
        raise InvalidArgumentError("simulated curves use the disjoint cosine generator basis")
    m = basis.size
    if omega.shape[0] % m:
        raise InvalidArgumentError(f"precision of size {omega.shape[0]} is not a multiple of m={m}")
    p = omega.shape[0] // m
    rngs = [rng_for(seed, replicate, population, i) for i in range(n)]
    coef = draw_coefficients(omega, n, rngs).reshape(n, p, m)
    times = np.linspace(0.0, 1.0, T)
    values = np.einsum("tk,ijk->ijt", basis(times), coef)
    if noise_sd > 0:
        values = values + noise_sd * np.stack([rng.standard_normal((p, T)) for rng in rngs])
    data = RawDataset.from_grid(times, values, basis.domain)
    return (data, coef) if return_coefficients else data


def simulate_populations(config: SimConfig, replicate: int = 0):
    """Precision pair plus the X and Y datasets for one replicate."""
    pair = generate_pair(config, replicate)
    basis = disjoint_cosine_basis(config.m)
    x = sample_functional_data(pair.omega_x, basis, config.n, config.T, config.noise_sd,
                               config.seed, POP_X, replicate)
    y = sample_functional_data(pair.omega_y, basis, config.n, config.T, config.noise_sd,
                               config.seed, POP_Y, replicate)
    return pair, x, y


def true_diff_edges(pair: PrecisionPair) -> EdgeSet:
    return EdgeSet.from_block_norms(block_norms(pair.omega_x - pair.omega_y, pair.m), 0.0)
