import csv
import json
import math
import xml.etree.ElementTree as ET

import pytest

from shearmhd import __version__
from shearmhd.cli import main
from shearmhd.config import ConfigError, config_to_dict, parse_config, serialize_config
from shearmhd.nonlinear_solver import load_checkpoint


class TestParse:
    def test_defaults(self):
        cfg = parse_config("{}")
        assert cfg.experiment == "linear-decay" and cfg.t_end == 400.0
        p = cfg.params
        assert (p.nu_x, p.nu_y, p.kappa_x, p.kappa_y, p.mu) == (0.01, 0.01, 0.01, 0.0, 0.01)

    def test_mu_expansion_and_nesting(self):
        cfg = parse_config(json.dumps({"experiment": "small-data", "params": {"mu": 0.05},
                                       "grid": {"n_kx": 17}, "time.t_end": 3.5}))
        assert cfg.experiment == "small-data" and cfg.t_end == 3.5 and cfg.grid.n_kx == 17
        assert cfg.params.nu_y == cfg.params.kappa_x == 0.05 and cfg.params.kappa_y == 0.0

    def test_inflation_defaults(self):
        cfg = parse_config('{"experiment": "inflation"}')
        assert cfg.params.mu == 0.1 and cfg.params.kappa_x == 0.0 and cfg.params.nu_y == 0.1

    def test_aliases(self):
        assert parse_config('{"experiment": "sweep"}').experiment == "threshold-sweep"
        assert parse_config('{"experiment.name": "linear-mode"}').experiment == "linear-decay"

    @pytest.mark.parametrize("text, key", [
        ('{"grid.n_kx": 16}', "grid.n_kx"),
        ('{"grid.n_kx": 17.0}', "grid.n_kx"),
        ('{"params.alpha": true}', "params.alpha"),
        ('{"params.allpha": 1}', "params.allpha"),
        ('{"params.alpha": 0.4}', "params.alpha"),
        ('{"experiment": "inflation", "params.kappa_x": 0.1}', "params.kappa_x"),
        ('{"experiment": "inflation", "params.nu_y": 0.0}', "params.nu_y"),
        ('{"experiment": "small-data", "params.nu_y": 0.2}', "params.mu"),
        ('{"experiment": "sweep", "experiment.mu_values": [0.05, 0.1]}', "experiment.mu_values"),
        ('{"experiment": "sweep", "experiment.mu_values": []}', "experiment.mu_values"),
        ('{"experiment.c_stab": 0.5}', "experiment.c_stab"),
        ('{"time.dt_max": -1}', "time.dt_max"),
        ('{"experiment.eps": -0.1}', "experiment.eps"),
        ('{"experiment": "bogus"}', "experiment.name"),
        ('{"grid": {"n_kx": 9}, "grid.n_kx": 9}', "grid.n_kx"),
        ('[1, 2]', "<root>"),
        ('{"a": ', "<root>"),
    ])
    def test_errors_name_the_key(self, text, key):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.key == key

    def test_round_trip(self):
        cfg = parse_config(json.dumps({"experiment": "sweep", "params.mu": 0.02,
                                       "experiment.mu_values": [0.01, 0.1], "grid.len_y": 7.5,
                                       "experiment.eps": 1e-4, "output.checkpoint": "x.cmhd"}))
        again = parse_config(serialize_config(cfg))
        assert again == cfg
        assert config_to_dict(again)["experiment.mu_values"] == [0.01, 0.1]


def write_config(tmp_path, data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


SMALL_GRID = {"grid.n_kx": 9, "grid.n_ky": 17}


class TestCli:
    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        for name in ("linear-mode", "nonlinear", "inflation", "small-data", "threshold-sweep",
                     "symbol-check"):
            assert name in text

    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            main(["--version"])
        assert __version__ in capsys.readouterr().out

    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2

    def test_bad_config_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, {"params.alpha": "strong"})
        assert main(["linear-mode", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 2

    def test_linear_mode_outputs(self, tmp_path):
        out = tmp_path / "lin"
        cfg = write_config(tmp_path, {**SMALL_GRID, "experiment.mode_k_max": 1,
                                      "experiment.mode_xi_max": 1.0, "params.mu": 0.05,
                                      "time.t_end": 60.0, "time.fit_start": 30.0,
                                      "time.fit_end": 60.0, "time.sample_interval": 5.0})
        assert main(["linear-mode", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        m = manifest(out)
        assert m["exit_code"] == 0 and m["category"] == "ok" and m["experiment"] == "linear-decay"
        assert set(m["files"]) == {"report.csv", "norms.svg"}
        assert m["config"]["output.dir"] == str(out)
        rows = list(csv.DictReader((out / "report.csv").open()))
        assert len(rows) == 13 and float(rows[0]["t"]) == 0.0
        svg = ET.parse(out / "norms.svg").getroot()
        lines = [e for e in svg.iter() if e.tag.endswith("polyline")]
        assert all(len(p.get("points").split()) == len(rows) for p in lines)

    def test_inflation_off_grid(self, tmp_path):
        out = tmp_path / "inf"
        cfg = write_config(tmp_path, {"experiment": "inflation", "time.t_end": 10.0})
        assert main(["inflation", "--config", cfg, "--out", str(out), "--quiet"]) == 2
        m = manifest(out)
        assert m["category"] == "config-infeasible"
        assert m["results"]["required_n_ky"] > 129

    def test_small_data_and_seed_override(self, tmp_path):
        out = tmp_path / "sd"
        cfg = write_config(tmp_path, {**SMALL_GRID, "params.mu": 0.05, "time.t_end": 1.0,
                                      "time.sample_interval": 0.25})
        assert main(["small-data", "--config", cfg, "--out", str(out), "--seed", "7",
                     "--quiet"]) == 0
        m = manifest(out)
        assert m["config"]["experiment.seed"] == 7 and m["results"]["stable"] is True
        assert len(list(csv.reader((out / "report.csv").open()))) == 1 + 5

    def test_nonlinear_checkpoint_and_resume(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        cfg = write_config(tmp_path, {**SMALL_GRID, "time.t_end": 0.5})
        assert main(["nonlinear", "--config", cfg, "--out", str(first), "--quiet"]) == 0
        state = load_checkpoint(first / "final.cmhd")
        assert state.t == 0.5 and state.grid.n_kx == 9
        cfg2 = write_config(tmp_path, {**SMALL_GRID, "time.t_end": 1.0,
                                       "output.resume": str(first / "final.cmhd")})
        assert main(["nonlinear", "--config", cfg2, "--out", str(second), "--quiet"]) == 0
        assert manifest(second)["results"]["t_start"] == 0.5
        assert load_checkpoint(second / "final.cmhd").t == 1.0

    def test_symbol_check(self, tmp_path):
        out = tmp_path / "sym"
        assert main(["symbol-check", "--out", str(out), "--quiet"]) == 0
        rows = list(csv.DictReader((out / "symbols.csv").open()))
        assert [float(r["t"]) for r in rows] == [1.0, 10.0, 100.0, 1000.0]
        assert manifest(out)["results"]["lmu_exceeds_reference"] is True

    def test_sweep_outputs(self, tmp_path):
        out = tmp_path / "sw"
        cfg = write_config(tmp_path, {**SMALL_GRID, "experiment.mu_values": [0.05, 0.5],
                                      "time.t_end": 0.2, "experiment.bisection_depth": 1,
                                      "experiment.bracket_budget": 1})
        assert main(["sweep", "--config", cfg, "--out", str(out), "--threads", "2",
                     "--quiet"]) == 0
        rows = list(csv.DictReader((out / "sweep.csv").open()))
        assert rows and set(rows[0]) == {"mu", "eps", "verdict", "sup_norm_ratio", "t_end"}
        summary = json.loads((out / "summary.json").read_text())
        assert {"gamma_fit", "ci", "n_points"} <= set(summary)
        assert manifest(out)["results"]["n_probes"] == len(rows)

    def test_numerical_failure_exit_code(self, tmp_path):
        out = tmp_path / "nf"
        cfg = write_config(tmp_path, {**SMALL_GRID, "time.t_end": 1.0, "experiment.eps": 50.0,
                                      "time.dt_floor": 0.5})
        assert main(["nonlinear", "--config", cfg, "--out", str(out), "--quiet"]) == 3
        m = manifest(out)
        assert m["category"] == "numerical" and "final.cmhd" in m["files"]
        assert math.isfinite(m["results"]["hn_initial"])
