"""Command-line interface: strict configs, outputs, exit codes, reproducibility."""

import csv
import json
import math

import numpy as np
import pytest

from bridgeint.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from bridgeint.config import ConfigError, load_config


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def base_bridge_config(**overrides):
    cfg = {
        "dimension": 3,
        "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 1.0},
        "statistic_kind": "bridge",
        "x": [0.0, 0.0, 0.0],
        "y": [0.0, 0.0, 0.0],
        "t": 5.0,
        "n_paths": 2000,
        "seed": 7,
        "grid": {"h_fine": 0.02},
    }
    cfg.update(overrides)
    return cfg


class TestConfigValidation:
    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, base_bridge_config(bogus=1))
        assert main(["moments", "--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_unknown_potential_key_rejected(self, tmp_path):
        cfg = base_bridge_config()
        cfg["potential"]["fuzz"] = 2
        path = write_config(tmp_path, cfg)
        assert main(["moments", "--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_required_field(self, tmp_path):
        cfg = base_bridge_config()
        del cfg["x"]
        path = write_config(tmp_path, cfg)
        assert main(["moments", "--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_low_dimension_theorem_rejected(self):
        with pytest.raises(ConfigError, match="d >= 3"):
            load_config({
                "dimension": 2,
                "potential": {"kind": "ball_indicator", "radius": 1.0},
                "x": [0.0, 0.0], "y": [0.0, 0.0],
                "horizons": [5.0, 10.0],
            }, "theorem1")

    def test_zero_radius_needs_zero_potential(self):
        with pytest.raises(ConfigError):
            load_config({
                "dimension": 3,
                "potential": {"kind": "ball_indicator", "radius": 0.0},
                "x": [0, 0, 0], "y": [0, 0, 0], "t": 1.0,
            }, "moments")

    def test_theorem2_rule_required(self):
        with pytest.raises(ConfigError):
            load_config({
                "dimension": 3,
                "potential": {"kind": "ball_indicator", "radius": 1.0},
                "x": [0, 0, 0], "horizons": [10.0, 100.0],
            }, "theorem2")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        assert main(["moments", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG


class TestBoundsCommand:
    def test_unit_ball_values(self, tmp_path):
        cfg = {
            "dimension": 3,
            "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 1.0},
        }
        path = write_config(tmp_path, cfg)
        assert main(["bounds", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "bounds_summary.json").read_text())
        assert doc["k1"] == pytest.approx(1.0, abs=1e-3)
        assert doc["alpha0"] == pytest.approx(1.0, abs=1e-3)
        assert doc["resolved_config"]["dimension"] == 3

    def test_degenerate_zero_height(self, tmp_path):
        cfg = {
            "dimension": 3,
            "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 0.0},
        }
        path = write_config(tmp_path, cfg)
        assert main(["bounds", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "bounds_summary.json").read_text())
        assert doc["k1"] == 0.0 and doc["alpha0"] is None and doc["degenerate"]

    def test_alpha1_probe_attached(self, tmp_path):
        cfg = {
            "dimension": 3,
            "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 1.0},
            "alphas": [0.0, 0.5, 20.0],
            "n_paths": 1500,
            "free_horizon": 50.0,
            "grid": {"h_fine": 0.05},
        }
        path = write_config(tmp_path, cfg)
        assert main(["bounds", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "bounds_summary.json").read_text())
        assert "alpha1_probe" in doc
        assert doc["alpha1_probe"]["unstable"][0] is False


class TestMomentsCommand:
    def test_bridge_moments_csv(self, tmp_path):
        path = write_config(tmp_path, base_bridge_config(k_list=[1]))
        code = main(["moments", "--config", path, "--out", str(tmp_path)])
        assert code == EXIT_OK
        with open(tmp_path / "moments.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["statistic", "k_or_alpha", "t", "value", "std_error",
                           "target", "target_error", "gap", "verdict"]
        assert rows[1][0] == "moment[bridge]"
        assert rows[1][-1] == "PASS"
        val = float(rows[1][3])
        assert 0.5 < val < 3.0

    def test_zero_potential_mgf(self, tmp_path):
        cfg = base_bridge_config()
        cfg["potential"]["height"] = 0.0
        cfg["alphas"] = [-0.5, 0.0, 1.0]
        path = write_config(tmp_path, cfg)
        assert main(["mgf", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "mgf_summary.json").read_text())
        assert all(entry["mean"] == 1.0 for entry in doc["curve"])

    def test_sample_command(self, tmp_path):
        path = write_config(tmp_path, base_bridge_config(n_paths=50))
        assert main(["sample", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
        with open(tmp_path / "sample.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["kind", "index", "value", "tail_potential"]
        assert len(rows) == 51

    def test_json_format_skips_rows_file(self, tmp_path):
        path = write_config(tmp_path, base_bridge_config(k_list=[1]))
        code = main(["moments", "--config", path, "--out", str(tmp_path),
                     "--format", "json"])
        assert code == EXIT_OK
        assert not (tmp_path / "moments.csv").exists()
        doc = json.loads((tmp_path / "moments_summary.json").read_text())
        assert doc["moments"][0]["k"] == 1

    def test_two_sided_moments(self, tmp_path):
        cfg = base_bridge_config(statistic_kind="two_sided", k_list=[1, 2],
                                 free_horizon=100.0)
        del cfg["t"]
        cfg["grid"] = {"h_fine": 0.02}
        cfg["n_paths"] = 4000
        path = write_config(tmp_path, cfg)
        code = main(["moments", "--config", path, "--out", str(tmp_path)])
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "moments_summary.json").read_text())
        k1 = next(e for e in doc["moments"] if e["k"] == 1)
        k2 = next(e for e in doc["moments"] if e["k"] == 2)
        assert k1["target"] == pytest.approx(2.0, abs=1e-3)
        assert k2["target"] is None

    def test_bloch_zero_potential_equals_kernel(self, tmp_path):
        from bridgeint.gaussian import transition_density

        cfg = {
            "dimension": 3,
            "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 0.0},
            "bloch_points": [{"x": [0, 0, 0], "y": [1.0, 0, 0], "t": 2.0}],
            "n_paths": 100,
        }
        path = write_config(tmp_path, cfg)
        assert main(["bloch", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "bloch_summary.json").read_text())
        kernel = transition_density(2.0, np.array([1.0, 0, 0]))
        assert doc["points"][0]["mean"] == pytest.approx(kernel, rel=1e-12)


class TestReproducibility:
    def test_byte_identical_reruns(self, tmp_path):
        path = write_config(tmp_path, base_bridge_config(k_list=[1, 2]))
        out1 = tmp_path / "run1"
        out2 = tmp_path / "run2"
        assert main(["moments", "--config", path, "--out", str(out1)]) == EXIT_OK
        assert main(["moments", "--config", path, "--out", str(out2)]) == EXIT_OK
        assert (out1 / "moments.csv").read_bytes() == (out2 / "moments.csv").read_bytes()
        assert (out1 / "moments_summary.json").read_bytes() == \
            (out2 / "moments_summary.json").read_bytes()

    def test_seed_flag_changes_output(self, tmp_path):
        path = write_config(tmp_path, base_bridge_config(k_list=[1]))
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        main(["moments", "--config", path, "--out", str(out1)])
        main(["moments", "--config", path, "--out", str(out2), "--seed", "99"])
        assert (out1 / "moments.csv").read_bytes() != (out2 / "moments.csv").read_bytes()

    def test_summary_round_trip(self, tmp_path):
        path = write_config(tmp_path, base_bridge_config(k_list=[1]))
        out1 = tmp_path / "first"
        out2 = tmp_path / "second"
        assert main(["moments", "--config", path, "--out", str(out1)]) == EXIT_OK
        summary = str(out1 / "moments_summary.json")
        assert main(["moments", "--config", summary, "--out", str(out2)]) == EXIT_OK
        assert (out1 / "moments.csv").read_bytes() == (out2 / "moments.csv").read_bytes()


class TestVerdictExitCodes:
    def test_theorem1_fail_is_exit_3(self, tmp_path):
        # two short horizons cannot reach the long-horizon target: FAIL, exit 3
        cfg = {
            "dimension": 3,
            "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 1.0},
            "x": [0.0, 0.0, 0.0],
            "y": [0.0, 0.0, 0.0],
            "horizons": [4.0, 8.0],
            "k_list": [1],
            "alphas": [0.0],
            "n_paths": 3000,
            "target_n_paths": 3000,
            "seed": 5,
            "grid": {"h_fine": 0.05},
        }
        path = write_config(tmp_path, cfg)
        code = main(["theorem1", "--config", path, "--out", str(tmp_path)])
        assert code == EXIT_FAIL
        doc = json.loads((tmp_path / "theorem1_summary.json").read_text())
        assert doc["passed"] is False
        assert doc["verdicts"]["bridge_moment/1"] == "FAIL"

    def test_theorem1_small_pass(self, tmp_path):
        cfg = {
            "dimension": 3,
            "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 1.0},
            "x": [0.0, 0.0, 0.0],
            "y": [0.0, 0.0, 0.0],
            "horizons": [10.0, 100.0],
            "k_list": [1],
            "alphas": [0.0],
            "n_paths": 4000,
            "target_n_paths": 4000,
            "seed": 11,
            "grid": {"h_fine": 0.02},
        }
        path = write_config(tmp_path, cfg)
        code = main(["theorem1", "--config", path, "--out", str(tmp_path)])
        assert code == EXIT_OK

    def test_theorem2_cli(self, tmp_path):
        cfg = {
            "dimension": 3,
            "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 1.0},
            "x": [0.0, 0.0, 0.0],
            "endpoint_rule": {"kind": "sqrt_t", "scale": 1.0},
            "horizons": [10.0, 200.0],
            "k_list": [1],
            "alphas": [0.0],
            "n_paths": 4000,
            "target_n_paths": 4000,
            "seed": 23,
            "grid": {"h_fine": 0.02},
        }
        path = write_config(tmp_path, cfg)
        code = main(["theorem2", "--config", path, "--out", str(tmp_path)])
        assert code in (EXIT_OK, EXIT_FAIL)
        doc = json.loads((tmp_path / "theorem2_summary.json").read_text())
        assert doc["meta"]["endpoint_rule"] == "sqrt_t"
        assert (tmp_path / "theorem2.csv").exists()

    def test_lemma4_cli_parts(self, tmp_path):
        base = {
            "dimension": 3,
            "potential": {"kind": "ball_indicator", "radius": 1.0, "height": 1.0},
            "horizons": [30.0, 120.0],
            "k_list": [1],
            "alphas": [0.3],
            "n_paths": 6000,
            "target_n_paths": 6000,
            "seed": 29,
            "grid": {"h_fine": 0.05},
        }
        cfg_a = dict(base, part="a", x=[0.0, 0.0, 0.0],
                     x_sequence=[[0.3, 0.0, 0.0], [0.1, 0.0, 0.0]])
        path = write_config(tmp_path, cfg_a, "a.json")
        out_a = tmp_path / "a"
        code = main(["lemma4", "--config", path, "--out", str(out_a)])
        assert code in (EXIT_OK, EXIT_FAIL)
        doc = json.loads((out_a / "lemma4_summary.json").read_text())
        stats = {row["statistic"] for row in doc["rows"]}
        assert "free_moment" in stats and "free_mgf" in stats

        cfg_b = dict(base, part="b",
                     x_sequence=[[6.0, 0.0, 0.0], [12.0, 0.0, 0.0]])
        path = write_config(tmp_path, cfg_b, "b.json")
        out_b = tmp_path / "b"
        code = main(["lemma4", "--config", path, "--out", str(out_b)])
        assert code in (EXIT_OK, EXIT_FAIL)
        doc = json.loads((out_b / "lemma4_summary.json").read_text())
        assert {row["statistic"] for row in doc["rows"]} == {"mgf_minus_one"}

    def test_mgf_unstable_flag_in_csv(self, tmp_path):
        cfg = base_bridge_config(statistic_kind="free", alphas=[40.0],
                                 n_paths=800, free_horizon=50.0)
        del cfg["y"], cfg["t"]
        cfg["grid"] = {"h_fine": 0.05}
        path = write_config(tmp_path, cfg)
        assert main(["mgf", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
        with open(tmp_path / "mgf.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[1][-1] == "UNSTABLE"
