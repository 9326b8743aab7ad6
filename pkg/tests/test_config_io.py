import json

import numpy as np
import pytest
import yaml

from igpk.config import (
    PROTOCOLS,
    config_to_dict,
    default_config,
    derive_seed,
    load_config,
    parse_config,
)
from igpk.data_io import fmt, read_dataset, write_csv, write_dataset
from igpk.errors import DimensionMismatch, InvalidConfig, IoError
from igpk.systems import NoiseSpec, add_noise, sample_initial_conditions, simulate


class TestConfig:
    def test_defaults_follow_protocols(self):
        s = default_config("scalar")
        assert (s.data.n_traj, s.data.n_steps, s.data.n_train) == (50, 50, 30)
        assert s.data.bounds == ((-5.0, 5.0),)
        p = default_config("predator_prey")
        assert (p.data.n_traj, p.data.n_steps, p.data.n_train, p.data.dt) == (200, 100, 80, 0.2)
        assert p.data.bounds == ((0.1, 4.0), (0.1, 3.0))

    def test_empty_mapping(self):
        assert parse_config({}) == default_config("scalar")

    def test_overrides(self):
        cfg = parse_config({
            "system": "predator_prey",
            "seed": 4,
            "data": {"noise": {"kind": "uniform", "intensity_pct": 10}},
            "model": {"kind": "igpk", "n_z": 6, "sgd_lr": 0.5, "z_init": "normal", "batch_size": None},
            "evaluate": {"levels": [0.5, 0.9]},
        })
        assert cfg.seed == 4
        assert cfg.data.noise == NoiseSpec("uniform", 10.0)
        assert cfg.model.igpk.n_z == 6 and cfg.model.igpk.sgd_lr == 0.5
        assert cfg.model.igpk.z_init == "normal"
        assert list(cfg.evaluate.levels) == [0.5, 0.9]

    def test_all_errors_reported(self):
        raw = {
            "system": "scalar",
            "bogus": 1,
            "data": {"n_traj": 10, "n_train": 12, "bounds": [[1, 0]], "noise": {"kind": "laplace"}},
            "model": {"kind": "mlp", "n_z": "ten"},
        }
        with pytest.raises(InvalidConfig) as exc:
            parse_config(raw, "x.yaml")
        msg = str(exc.value)
        for path in ("bogus", "data.n_train", "data.bounds", "data.noise.kind", "model.kind", "model.n_z"):
            assert f"x.yaml: {path}:" in msg

    def test_unknown_system(self):
        with pytest.raises(InvalidConfig, match="system"):
            parse_config({"system": "lorenz"})

    def test_continuous_needs_dt(self):
        with pytest.raises(InvalidConfig, match="data.dt"):
            parse_config({"system": "predator_prey", "data": {"dt": None}})

    def test_yaml_syntax_position(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("system: scalar\nmodel: {kind: igpk\n")
        with pytest.raises(InvalidConfig, match=r"line \d+, column \d+"):
            load_config(p)

    def test_roundtrip_through_yaml(self, tmp_path):
        cfg = default_config("predator_prey", "rbf_edmd").with_noise(NoiseSpec("gaussian", 5.0))
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump(config_to_dict(cfg)))
        assert load_config(p) == cfg

    def test_derive_seed(self):
        a = derive_seed(7, "noise")
        assert a == derive_seed(7, "noise")
        assert a != derive_seed(7, "initial_conditions")
        assert a != derive_seed(8, "noise")


class TestDataIo:
    def test_fmt(self):
        assert fmt(None) == "" and fmt(float("nan")) == ""
        x = 0.1 + 0.2
        assert float(fmt(x)) == x
        assert fmt(3) == "3" and fmt("a") == "a"

    def test_dataset_roundtrip_exact(self, tmp_path):
        d = simulate("predator_prey", sample_initial_conditions([[0.1, 4], [0.1, 3]], 4, 0), 7, 0.2)
        d = add_noise(d, NoiseSpec("gaussian", 10.0, 3))
        write_dataset(tmp_path / "ds", d, {"note": "x"})
        r = read_dataset(tmp_path / "ds")
        np.testing.assert_array_equal(r.snapshots, d.snapshots)
        assert r.dt == 0.2 and r.meta["note"] == "x"
        meta = json.loads((tmp_path / "ds" / "meta.json").read_text())
        assert (meta["n_x"], meta["n_T"], meta["N"]) == (2, 4, 7)

    def test_csv_layout(self, tmp_path):
        d = simulate("scalar", [[0.0, 1.0]], 3)
        write_dataset(tmp_path, d)
        lines = (tmp_path / "X.csv").read_text().splitlines()
        assert lines[0] == "traj,step,x1"
        assert lines[1] == "0,0,0"
        assert len(lines) == 1 + 6

    def test_malformed(self, tmp_path):
        d = simulate("scalar", [[0.0, 1.0]], 3)
        write_dataset(tmp_path, d)
        (tmp_path / "X.csv").write_text("traj,step,x1\n0,0,abc\n")
        with pytest.raises(IoError):
            read_dataset(tmp_path)
        (tmp_path / "meta.json").write_text("{")
        with pytest.raises(IoError):
            read_dataset(tmp_path)

    def test_missing(self, tmp_path):
        with pytest.raises(OSError):
            read_dataset(tmp_path / "nope")

    def test_write_csv_quotes(self, tmp_path):
        write_csv(tmp_path / "t.csv", ["a", "b"], [["x,y", 1.5], ["plain", None]])
        assert (tmp_path / "t.csv").read_text() == 'a,b\n"x,y",1.5\nplain,\n'
