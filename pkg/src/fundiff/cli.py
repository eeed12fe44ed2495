"""Command-line front end: ``fundiff {simulate,estimate,roc,tune}``.

Each subcommand reads one YAML file of settings (``--config``), applies
``--set key=value`` overrides (dotted keys reach into nested sections) and
writes its artifacts plus a ``manifest.json`` to the output directory.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .basis import Domain
from .curvefit import RawDataset
from .errors import ConfigError, DataError, FundiffError, InvalidArgumentError
from .fudge import block_norms, threshold_edges
from .pipeline import (
    METHODS,
    default_grid,
    edges_for_method,
    fudge_path,
    jfgl_estimate,
    project,
    sparsity_target_lambda,
)
from .simgen import Model, SimConfig, simulate_populations
from .tuneval import auc, cv_select_dims, make_basis, roc_from_edge_sets, scv_select_lambda

log = logging.getLogger("fundiff")

CSV_COLUMNS = ["sample_id", "node_id", "time", "value"]


# ---------------------------------------------------------------------------
# configuration schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BasisSettings(_Strict):
    kind: Literal["bspline", "fourier"] = "bspline"
    L: int = Field(15, ge=1)


class SimSettings(_Strict):
    model: Model = Model.M2
    p: int = Field(30, ge=1)
    m: int = Field(5, ge=1)
    n: int = Field(100, ge=1)
    T: int = Field(200, ge=1)
    noise_sd: float = Field(0.5, ge=0)
    seed: int = Field(0, ge=0)

    def to_config(self) -> SimConfig:
        return SimConfig(self.model, self.p, self.m, self.n, self.T, self.noise_sd, self.seed)


class SolverSettings(_Strict):
    max_iters: int = Field(2000, ge=1)
    tol: float = Field(1e-8, gt=0)


class JfglSettings(_Strict):
    lam1: float = Field(0.1, ge=0)
    #: ``None`` uses the mean sample size
    rho: Optional[float] = Field(None, gt=0)
    rho_inner: float = Field(1.0, gt=0)
    max_iters: int = Field(2000, ge=1)
    tol: float = Field(1e-6, gt=0)
    inner_max_iters: int = Field(500, ge=1)
    inner_tol: float = Field(1e-8, gt=0)
    adaptive_rho: bool = True

    def solver_kwargs(self) -> dict:
        return self.model_dump(exclude={"lam1", "rho"})


class GridSettings(_Strict):
    #: explicit penalty values; otherwise a log grid relative to each replicate's own maximum
    values: Optional[List[float]] = None
    n: int = Field(30, ge=1)
    ratio: float = Field(1e-3, gt=0, le=1)


class SimulateConfig(_Strict):
    simulation: SimSettings = SimSettings()
    replicates: int = Field(1, ge=1)
    output: str = "simulate_out"


class EstimateConfig(_Strict):
    x: str
    y: str
    domain: Tuple[float, float] = (0.0, 1.0)
    basis: BasisSettings = BasisSettings()
    M: int = Field(5, ge=1)
    #: subtract each population's mean curve before the FPCA
    center: bool = False
    method: Literal["fudge", "gfgl", "ffgl", "ffgl2", "fgl", "multiple"] = "fudge"
    #: fixed penalty (``lambda`` for fudge/multiple, ``lambda2`` for the joint methods)
    lam: Optional[float] = Field(None, ge=0)
    #: sparsity-target mode (fudge only): bisect until the edge count is within one of this
    target_edges: Optional[int] = Field(None, ge=0)
    #: sparsity target as a fraction of the possible edges, e.g. 0.01
    target_fraction: Optional[float] = Field(None, ge=0, le=1)
    eps: float = Field(0.0, ge=0)
    num_times: int = Field(15, ge=1)
    solver: SolverSettings = SolverSettings()
    jfgl: JfglSettings = JfglSettings()
    output: str = "estimate_out"

    @model_validator(mode="after")
    def _one_mode(self):
        modes = sum(v is not None for v in (self.lam, self.target_edges, self.target_fraction))
        if modes != 1:
            raise ValueError("set exactly one of lam, target_edges, target_fraction")
        if self.method != "fudge" and self.lam is None:
            raise ValueError("sparsity-target mode is available for method 'fudge' only")
        return self


class RocConfig(_Strict):
    simulation: SimSettings = SimSettings()
    replicates: int = Field(5, ge=1)
    methods: List[str] = ["fudge", "multiple"]
    basis: BasisSettings = BasisSettings()
    M: int = Field(5, ge=1)
    grid: GridSettings = GridSettings()
    num_times: int = Field(15, ge=1)
    solver: SolverSettings = SolverSettings()
    jfgl: JfglSettings = JfglSettings()
    workers: int = Field(1, ge=1)
    output: str = "roc_out"

    @field_validator("methods")
    @classmethod
    def _known(cls, v):
        bad = [m for m in v if m not in METHODS]
        if bad or not v:
            raise ValueError(f"unknown methods {bad}; expected a nonempty subset of {list(METHODS)}")
        return v


class TuneConfig(_Strict):
    x: str
    y: str
    domain: Tuple[float, float] = (0.0, 1.0)
    basis_kind: Literal["bspline", "fourier"] = "bspline"
    folds: int = Field(5, ge=2)
    seed: int = Field(0, ge=0)
    #: dimension selection; skipped when either grid is empty
    L_grid: List[int] = [10, 15, 20]
    M_grid: List[int] = [2, 3, 4, 5, 6]
    #: lambda selection on the chosen (or given) L and M; skipped when false
    select_lambda: bool = True
    L: Optional[int] = None
    M: Optional[int] = None
    grid: GridSettings = GridSettings(ratio=1e-2)
    solver: SolverSettings = SolverSettings()
    output: str = "tune_out"


SCHEMAS = {"simulate": SimulateConfig, "estimate": EstimateConfig, "roc": RocConfig, "tune": TuneConfig}


def _apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    parts = key.strip().split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-section")
    node[parts[-1]] = value


def load_config(command: str, path: Optional[str], overrides: List[str], output: Optional[str] = None):
    """Parse, override and validate the settings for ``command``."""
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping")
    for item in overrides:
        _apply_override(raw, item)
    if output is not None:
        raw["output"] = output
    try:
        return SCHEMAS[command].model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid {command} config:\n{exc}") from None


# ---------------------------------------------------------------------------
# file formats


def write_dataset(data: RawDataset, path: Path) -> None:
    """Long-format CSV ``sample_id,node_id,time,value`` with 1-based ids."""
    rows_i, rows_j, times, values = [], [], [], []
    for i, row in enumerate(data.observations):
        for j, (t, h) in enumerate(row):
            rows_i.append(np.full(t.size, i + 1))
            rows_j.append(np.full(t.size, j + 1))
            times.append(t)
            values.append(h)
    frame = pd.DataFrame({
        "sample_id": np.concatenate(rows_i),
        "node_id": np.concatenate(rows_j),
        "time": np.concatenate(times),
        "value": np.concatenate(values),
    })
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_dataset(path, domain: Domain = Domain()) -> RawDataset:
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise DataError(f"input file {path} not found") from None
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from None
    if list(frame.columns) != CSV_COLUMNS:
        raise DataError(f"{path}: expected header {','.join(CSV_COLUMNS)}, got {','.join(map(str, frame.columns))}")
    if frame.isna().any().any():
        raise DataError(f"{path}: missing entries")
    for col in ("sample_id", "node_id"):
        if not pd.api.types.is_integer_dtype(frame[col]):
            raise DataError(f"{path}: column {col} must hold integers")
    n, p = int(frame["sample_id"].max()), int(frame["node_id"].max())
    if frame["sample_id"].min() < 1 or frame["node_id"].min() < 1:
        raise DataError(f"{path}: ids are 1-based")
    frame = frame.sort_values(["sample_id", "node_id", "time"], kind="stable")
    groups = {key: g for key, g in frame.groupby(["sample_id", "node_id"], sort=True)}
    obs = []
    for i in range(1, n + 1):
        row = []
        for j in range(1, p + 1):
            if (i, j) not in groups:
                raise DataError(f"{path}: no observations for sample {i}, node {j}")
            g = groups[(i, j)]
            row.append((g["time"].to_numpy(float), g["value"].to_numpy(float)))
        obs.append(row)
    try:
        return RawDataset(obs, domain)
    except FundiffError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _settings(config: BaseModel) -> dict:
    """Settings that determine the results (the output location does not)."""
    return config.model_dump(mode="json", exclude={"output"})


def _config_hash(config: BaseModel) -> str:
    blob = json.dumps(_settings(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _write_manifest(out: Path, command: str, config: BaseModel, extra: dict) -> None:
    files = {}
    for f in sorted(out.iterdir()):
        if f.is_file() and f.name != "manifest.json":
            files[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    manifest = {
        "command": command,
        "version": __version__,
        "config": _settings(config),
        "config_sha256": _config_hash(config),
        "files": files,
        **extra,
    }
    _dump_json(manifest, out / "manifest.json")


def _outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(config: SimulateConfig) -> Path:
    out = _outdir(config.output)
    sim = config.simulation.to_config()
    shared_truth = sim.model is Model.M2
    for r in range(config.replicates):
        pair, x, y = simulate_populations(sim, r)
        write_dataset(x, out / f"rep{r + 1}_X.csv")
        write_dataset(y, out / f"rep{r + 1}_Y.csv")
        if shared_truth:
            if r == 0:
                _dump_json(pair.edges.to_json(), out / "truth.json")
        else:
            _dump_json(pair.edges.to_json(), out / f"rep{r + 1}_truth.json")
    _write_manifest(out, "simulate", config, {"seeds": {"seed": sim.seed, "replicates": config.replicates}})
    return out


def _block_norm_table(norms: np.ndarray) -> pd.DataFrame:
    p = norms.shape[0]
    j, l = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    return pd.DataFrame({"row": j.ravel() + 1, "col": l.ravel() + 1, "norm": norms.ravel()})


def cmd_estimate(config: EstimateConfig) -> Path:
    domain = Domain(*config.domain)
    x, y = read_dataset(config.x, domain), read_dataset(config.y, domain)
    if x.p != y.p:
        raise DataError(f"populations have {x.p} and {y.p} nodes")
    basis = make_basis(config.basis.kind, config.basis.L, domain)
    data = project(x, y, basis, config.M, center=config.center)
    out = _outdir(config.output)
    solver = config.solver.model_dump()
    extra: Dict[str, object] = {"method": config.method}
    norms = None
    if config.method == "fudge":
        if config.lam is not None:
            est = fudge_path(data, [config.lam], eps=config.eps, **solver)[0]
            lam, hit = config.lam, None
            edges = threshold_edges(est, config.eps)
        else:
            target = config.target_edges
            if target is None:
                target = int(round(config.target_fraction * data.p * (data.p - 1) / 2))
            lam, est, edges, hit = sparsity_target_lambda(data, target, **solver)
            extra["target_edges"] = target
            extra["target_reached"] = bool(hit)
        norms = est.block_norms()
        extra.update(lam=float(lam), converged=bool(est.converged), iterations=int(est.iterations))
    elif config.method == "multiple":
        res = edges_for_method("multiple", data, [config.lam], x, y, num_times=config.num_times, fudge_opts=solver)
        edges = res["edges"][0]
        extra.update(lam=float(config.lam), converged=True)
    else:
        (tx, ty), edges = jfgl_estimate(
            data, config.method, config.jfgl.lam1, config.lam, rho=config.jfgl.rho,
            eps=config.eps, **config.jfgl.solver_kwargs(),
        )
        norms = block_norms(tx.theta - ty.theta, data.M)
        extra.update(lam2=float(config.lam), lam1=config.jfgl.lam1, converged=bool(tx.converged),
                     iterations=int(tx.iterations))
    _dump_json(edges.to_json(), out / "edges.json")
    if norms is not None:
        _block_norm_table(norms).to_csv(out / "block_norms.csv", index=False, float_format="%.17g",
                                        lineterminator="\n")
    _write_manifest(out, "estimate", config, extra)
    return out


def _roc_replicate(args) -> List[dict]:
    """ROC rows for one replicate (runs in a worker process when a pool is used)."""
    config, r = args
    sim = config.simulation.to_config()
    pair, x, y = simulate_populations(sim, r)
    basis = make_basis(config.basis.kind, config.basis.L)
    data = project(x, y, basis, config.M)
    truth = pair.edges
    rows = []
    for method in config.methods:
        if config.grid.values is not None:
            grid = np.asarray(config.grid.values, float)
            ratios = [None] * grid.size
        else:
            grid = default_grid(method, data, x, y, n=config.grid.n, ratio=config.grid.ratio,
                                num_times=config.num_times, lam1=config.jfgl.lam1, rho=config.jfgl.rho,
                                jfgl_opts=config.jfgl.solver_kwargs())
            ratios = list(grid / grid[0])
        res = edges_for_method(
            method, data, grid, x, y, lam1=config.jfgl.lam1, rho=config.jfgl.rho, num_times=config.num_times,
            fudge_opts=config.solver.model_dump(), jfgl_opts=config.jfgl.solver_kwargs(),
        )
        roc = roc_from_edge_sets(res["edges"], grid, truth)
        for k, ((fpr, tpr, lam), conv) in enumerate(zip(roc.points, res["converged"])):
            rows.append({
                "method": method, "p": sim.p, "replicate": r + 1, "lambda": lam,
                "grid_index": k, "lambda_ratio": ratios[k], "fpr": fpr, "tpr": tpr,
                "converged": bool(conv), "auc": auc(roc),
            })
    return rows


def cmd_roc(config: RocConfig) -> Path:
    out = _outdir(config.output)
    jobs = [(config, r) for r in range(config.replicates)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_roc_replicate, jobs))
    else:
        results = [_roc_replicate(job) for job in jobs]
    table = pd.DataFrame([row for rows in results for row in rows])
    fmt = dict(index=False, float_format="%.17g", lineterminator="\n")
    table[["method", "p", "replicate", "lambda", "fpr", "tpr"]].to_csv(out / "roc.csv", **fmt)
    key = "lambda" if config.grid.values is not None else "lambda_ratio"
    mean = (
        table.groupby(["method", "grid_index"], sort=False)
        .agg(p=("p", "first"), **{key: (key, "first")}, fpr=("fpr", "mean"), tpr=("tpr", "mean"))
        .reset_index()
    )
    mean[["method", "p", "grid_index", key, "fpr", "tpr"]].to_csv(out / "roc_mean.csv", **fmt)
    aucs = table.groupby(["method", "replicate"], sort=False)["auc"].first().reset_index()
    summary = aucs.groupby("method", sort=False)["auc"].mean().reset_index()
    summary["replicate"] = "mean"
    pd.concat([aucs, summary[["method", "replicate", "auc"]]]).to_csv(out / "auc.csv", **fmt)
    conv = table.groupby("method", sort=False)["converged"].mean().to_dict()
    _write_manifest(out, "roc", config, {
        "seeds": {"seed": config.simulation.seed, "replicates": config.replicates},
        "fraction_converged": {k: float(v) for k, v in conv.items()},
    })
    return out


def cmd_tune(config: TuneConfig) -> Path:
    domain = Domain(*config.domain)
    x, y = read_dataset(config.x, domain), read_dataset(config.y, domain)
    out = _outdir(config.output)
    result: Dict[str, object] = {}
    L, M = config.L, config.M
    if config.L_grid and config.M_grid:
        dims = cv_select_dims(x, y, config.L_grid, config.M_grid, folds=config.folds, seed=config.seed,
                              basis_kind=config.basis_kind)
        result["dims"] = {
            "chosen": {"L": dims.chosen[0], "M": dims.chosen[1]},
            "scores": [{"L": k[0], "M": k[1], "score": v} for k, v in sorted(dims.scores.items())],
        }
        L = L if L is not None else dims.chosen[0]
        M = M if M is not None else dims.chosen[1]
    if config.select_lambda:
        if L is None or M is None:
            raise InvalidArgumentError("lambda selection needs L and M (given or selected)")
        data = project(x, y, make_basis(config.basis_kind, L, domain), M)
        if config.grid.values is not None:
            grid = config.grid.values
        else:
            grid = default_grid("fudge", data, n=config.grid.n, ratio=config.grid.ratio)
        lam = scv_select_lambda(data.scores_x, data.scores_y, grid, folds=config.folds, seed=config.seed,
                                **config.solver.model_dump())
        result["lambda"] = {
            "L": L, "M": M, "chosen": lam.chosen,
            "scores": [{"lambda": k, "score": v} for k, v in lam.scores.items()],
        }
    _dump_json(result, out / "tune.json")
    _write_manifest(out, "tune", config, {"seeds": {"seed": config.seed}})
    return out


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "roc": cmd_roc, "tune": cmd_tune}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fundiff", description="Functional differential graph estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} step")
        p.add_argument("-c", "--config", help="YAML settings file")
        p.add_argument("-s", "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a setting; dotted keys address nested sections")
        p.add_argument("-o", "--output", help="output directory (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = load_config(args.command, args.config, args.overrides, args.output)
        out = COMMANDS[args.command](config)
    except FundiffError as exc:
        print(f"fundiff {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fundiff {args.command}: I/O error: {exc}", file=sys.stderr)
        return DataError.exit_code
    log.info("wrote %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
