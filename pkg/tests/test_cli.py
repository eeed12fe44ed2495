import json

import numpy as np
import pandas as pd
import pytest

from fundiff.cli import EstimateConfig, load_config, main, read_dataset, write_dataset
from fundiff.curvefit import RawDataset
from fundiff.errors import ConfigError, DataError

SMALL = ["-s", "simulation.p=7", "-s", "simulation.n=30", "-s", "simulation.T=50"]


def run_simulate(out, *extra):
    assert main(["simulate", "-o", str(out), *SMALL, *extra]) == 0
    return out


@pytest.fixture(scope="module")
def simdir(tmp_path_factory):
    return run_simulate(tmp_path_factory.mktemp("sim"))


class TestSimulate:
    def test_outputs(self, simdir):
        names = sorted(f.name for f in simdir.iterdir())
        assert names == ["manifest.json", "rep1_X.csv", "rep1_Y.csv", "truth.json"]
        truth = json.loads((simdir / "truth.json").read_text())
        assert truth == {"p": 7, "edges": [[1, 4], [2, 5], [3, 6], [4, 7]]}

    def test_byte_identical(self, simdir, tmp_path):
        other = run_simulate(tmp_path / "again")
        for name in ("rep1_X.csv", "rep1_Y.csv", "truth.json", "manifest.json"):
            assert (simdir / name).read_bytes() == (other / name).read_bytes()

    def test_manifest(self, simdir):
        man = json.loads((simdir / "manifest.json").read_text())
        assert man["command"] == "simulate"
        assert man["config"]["simulation"]["p"] == 7
        assert set(man["files"]) == {"rep1_X.csv", "rep1_Y.csv", "truth.json"}

    def test_per_replicate_truth(self, tmp_path):
        run_simulate(tmp_path, "-s", "simulation.model=M3", "-s", "replicates=2")
        assert (tmp_path / "rep1_truth.json").exists() and (tmp_path / "rep2_truth.json").exists()


class TestDatasetFiles:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = RawDataset([[(np.sort(rng.random(4)), rng.standard_normal(4)) for _ in range(2)] for _ in range(3)])
        write_dataset(data, tmp_path / "d.csv")
        assert read_dataset(tmp_path / "d.csv").equals(data)

    def test_bad_header(self, tmp_path):
        (tmp_path / "d.csv").write_text("i,j,t,v\n1,1,0.5,1.0\n")
        with pytest.raises(DataError):
            read_dataset(tmp_path / "d.csv")

    def test_missing_curve(self, tmp_path):
        (tmp_path / "d.csv").write_text("sample_id,node_id,time,value\n1,1,0.5,1.0\n2,2,0.5,1.0\n")
        with pytest.raises(DataError):
            read_dataset(tmp_path / "d.csv")

    def test_zero_based_ids(self, tmp_path):
        (tmp_path / "d.csv").write_text("sample_id,node_id,time,value\n0,1,0.5,1.0\n")
        with pytest.raises(DataError):
            read_dataset(tmp_path / "d.csv")


class TestConfig:
    def test_yaml_and_overrides(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("simulation:\n  p: 12\n  model: M3\nreplicates: 2\n")
        c = load_config("simulate", str(cfg), ["simulation.p=15"])
        assert (c.simulation.p, c.simulation.model, c.replicates) == (15, "M3", 2)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            load_config("simulate", None, ["simulation.q=1"])

    def test_estimate_needs_one_mode(self):
        with pytest.raises(ConfigError):
            load_config("estimate", None, ["x=a", "y=b"])
        with pytest.raises(ConfigError):
            load_config("estimate", None, ["x=a", "y=b", "lam=0.1", "target_edges=3"])
        with pytest.raises(ConfigError):
            load_config("estimate", None, ["x=a", "y=b", "method=gfgl", "target_edges=3"])
        assert isinstance(load_config("estimate", None, ["x=a", "y=b", "lam=0.1"]), EstimateConfig)

    def test_malformed_yaml(self, tmp_path):
        (tmp_path / "c.yaml").write_text("a: [1, 2\n")
        with pytest.raises(ConfigError):
            load_config("simulate", str(tmp_path / "c.yaml"), [])


class TestExitCodes:
    def test_invalid_config(self, tmp_path):
        assert main(["simulate", "-o", str(tmp_path), "-s", "simulation.model=M9"]) == 2

    def test_unknown_command(self):
        assert main(["plot"]) == 2

    def test_missing_input(self, tmp_path):
        assert main(["estimate", "-o", str(tmp_path), "-s", f"x={tmp_path}/no.csv",
                     "-s", f"y={tmp_path}/no.csv", "-s", "lam=0.1"]) == 3

    def test_numerical_failure(self, tmp_path):
        # every curve is zero, so the score covariances have no usable spectrum
        frame = pd.DataFrame({"sample_id": np.repeat([1, 2, 3], 40), "node_id": 1,
                              "time": np.tile(np.linspace(0, 1, 40), 3), "value": 0.0})
        frame2 = frame.copy()
        frame2["node_id"] = 2
        both = pd.concat([frame, frame2]).sort_values(["sample_id", "node_id"])
        both.to_csv(tmp_path / "z.csv", index=False)
        rc = main(["estimate", "-o", str(tmp_path / "out"), "-s", f"x={tmp_path}/z.csv",
                   "-s", f"y={tmp_path}/z.csv", "-s", "lam=0.1", "-s", "M=2", "-s", "basis.L=5"])
        assert rc == 4


def estimate_args(simdir, out, *extra):
    return ["estimate", "-o", str(out), "-s", f"x={simdir}/rep1_X.csv", "-s", f"y={simdir}/rep1_Y.csv",
            "-s", "basis.L=10", *extra]


class TestEstimate:
    def test_fixed_lambda(self, simdir, tmp_path):
        assert main(estimate_args(simdir, tmp_path, "-s", "lam=0.05")) == 0
        edges = json.loads((tmp_path / "edges.json").read_text())
        assert edges["p"] == 7
        norms = pd.read_csv(tmp_path / "block_norms.csv")
        assert list(norms.columns) == ["row", "col", "norm"]
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["lam"] == 0.05

    def test_target_zero_edges(self, simdir, tmp_path):
        assert main(estimate_args(simdir, tmp_path, "-s", "target_edges=0")) == 0
        assert json.loads((tmp_path / "edges.json").read_text())["edges"] == []

    def test_target_edges(self, simdir, tmp_path):
        assert main(estimate_args(simdir, tmp_path, "-s", "target_edges=3")) == 0
        n = len(json.loads((tmp_path / "edges.json").read_text())["edges"])
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert abs(n - 3) <= 1 or not man["target"]["hit"]

    def test_joint_method(self, simdir, tmp_path):
        assert main(estimate_args(simdir, tmp_path, "-s", "method=gfgl", "-s", "lam=5.0")) == 0
        assert (tmp_path / "edges.json").exists()

    def test_deterministic(self, simdir, tmp_path):
        for d in ("a", "b"):
            assert main(estimate_args(simdir, tmp_path / d, "-s", "lam=0.05")) == 0
        for name in ("edges.json", "block_norms.csv", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestRocAndTune:
    def test_roc(self, tmp_path):
        args = ["roc", "-o", str(tmp_path), *SMALL, "-s", "replicates=2", "-s", "grid.n=5",
                "-s", "basis.L=10", "-s", "methods=[fudge, multiple]", "-s", "num_times=5"]
        assert main(args) == 0
        roc = pd.read_csv(tmp_path / "roc.csv")
        assert list(roc.columns) == ["method", "p", "replicate", "lambda", "fpr", "tpr"]
        assert len(roc) == 2 * 2 * 5
        auc = pd.read_csv(tmp_path / "auc.csv")
        assert set(auc["method"]) == {"fudge", "multiple"}
        assert auc["auc"].between(0, 1).all()
        assert (tmp_path / "roc_mean.csv").exists()

    def test_tune(self, simdir, tmp_path):
        args = ["tune", "-o", str(tmp_path), "-s", f"x={simdir}/rep1_X.csv", "-s", f"y={simdir}/rep1_Y.csv",
                "-s", "L_grid=[8, 10]", "-s", "M_grid=[2, 3]", "-s", "grid.n=4"]
        assert main(args) == 0
        result = json.loads((tmp_path / "tune.json").read_text())
        assert result["dims"]["chosen"]["L"] in (8, 10)
        assert result["lambda"]["chosen"] in [s["lambda"] for s in result["lambda"]["scores"]]
