import json

import numpy as np
import pytest

from metriplex import config, io
from metriplex.errors import ConfigError


def fpe_config(**over):
    data = {
        "scenario": "fpe",
        "system": {"name": "canonical2d"},
        "grid": {"min": [-4.0, -4.0], "max": [4.0, 4.0], "cells": [16, 16]},
        "fpe": {"dt": 0.01, "t_end": 0.1},
    }
    data.update(over)
    return data


class TestValidation:
    def test_defaults_filled(self):
        cfg = config.validate(fpe_config())
        assert cfg.section("fpe")["D"] == 0.2
        assert cfg.section("fpe")["beta"] == "adaptive"
        assert cfg.seed == 0 and cfg.threads == 1

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="'gird.cells'"):
            config.validate(fpe_config(gird={"cells": [8, 8]}))

    def test_unknown_nested_key(self):
        data = fpe_config()
        data["fpe"]["dtt"] = 0.1
        with pytest.raises(ConfigError, match="'fpe.dtt'"):
            config.validate(data)

    def test_wrong_type(self):
        data = fpe_config()
        data["grid"]["cells"] = [16.5, 16]
        with pytest.raises(ConfigError, match="grid.cells"):
            config.validate(data)

    def test_integers_accepted_as_floats(self):
        data = fpe_config()
        data["fpe"]["t_end"] = 1
        assert isinstance(config.validate(data).section("fpe")["t_end"], float)

    def test_missing_required(self):
        data = fpe_config()
        del data["fpe"]["dt"]
        with pytest.raises(ConfigError, match="fpe.dt"):
            config.validate(data)

    @pytest.mark.parametrize("over", [{"scenario": "weather"}, {"schema_version": 2}, {"threads": 0}])
    def test_rejected_top_level(self, over):
        with pytest.raises(ConfigError):
            config.validate(fpe_config(**over))

    def test_polynomial_replaces_name(self):
        spec = config.load_raw("configs/polynomial_sde.toml")
        cfg = config.validate(spec)
        assert cfg.section("system")["polynomial"] is not None

    @pytest.mark.parametrize("path", sorted(__import__("glob").glob("configs/*.toml")))
    def test_shipped_configs_validate(self, path):
        config.load(path)

    def test_unreadable_and_malformed(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            config.load_raw(tmp_path / "absent.toml")
        bad = tmp_path / "bad.toml"
        bad.write_text("scenario = [\n")
        with pytest.raises(ConfigError, match="not valid TOML"):
            config.load_raw(bad)

    def test_json_schema(self):
        schema = config.json_schema()
        assert schema["additionalProperties"] is False
        assert "cells" in schema["properties"]["grid"]["properties"]
        json.dumps(schema)


class TestArtifacts:
    def test_value_formatting(self):
        assert io.format_value(0.1) == "1.0000000000000001e-01"
        assert io.format_value(np.int64(3)) == "3"
        assert io.format_value(float("nan")) == "nan"
        assert io.format_value(True) == "true"

    def test_csv_rows_checked(self):
        with pytest.raises(ValueError):
            io.csv_bytes(["a", "b"], [[1.0]])

    def test_output_dir_manifest(self, tmp_path):
        out = io.OutputDir(tmp_path / "run", {"scenario": "demo"})
        out.write_csv("table.csv", ["t", "x"], [[0.0, 1.0], [0.5, 2.0]])
        out.write_json("summary.json", {"value": np.float64(2.5), "z": 1 + 2j})
        out.write_array("state", np.arange(6.0).reshape(2, 3), {"K": 1})
        path = out.finish()
        manifest = json.loads(path.read_text())
        assert set(manifest["files"]) == {"table.csv", "summary.json", "state.npy", "state.json"}
        for name, entry in manifest["files"].items():
            assert entry["sha256"] == io.sha256_file(tmp_path / "run" / name)
        assert manifest["config"] == {"scenario": "demo"} and manifest["status"] == "ok"
        side = json.loads((tmp_path / "run" / "state.json").read_text())
        assert side["shape"] == [2, 3] and side["K"] == 1
        np.testing.assert_array_equal(np.load(tmp_path / "run" / "state.npy"), np.arange(6.0).reshape(2, 3))
        assert not [p for p in (tmp_path / "run").iterdir() if p.name.startswith(".")]

    def test_csv_round_trip(self, tmp_path):
        out = io.OutputDir(tmp_path)
        rows = [[0.1, 1e-300], [np.pi, -2.0]]
        out.write_csv("d.csv", ["a", "b"], rows)
        header, data = io.read_csv(tmp_path / "d.csv")
        assert header == ["a", "b"]
        np.testing.assert_array_equal(data, rows)
