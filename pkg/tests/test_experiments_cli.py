import csv
import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest
import yaml

from amplowdeg.cli import main
from amplowdeg.experiments import (CSV_FIELDS, PRESETS, ResultRow, RunConfig, emit_csv, figure1_sweep,
                                   lowdeg_vs_amp_report)
from amplowdeg.plotting import emit_svg
from amplowdeg.prior import InvalidParameter

SMALL = {"preset": "custom", "n": 200, "reps": 2, "s_grid": [0.3, 1.0], "iterations": [2, 3], "seed": 4,
         "lowdeg": {"D": 1, "n_list": [6, 8], "samples": 400}}


def read_csv(path):
    lines = [ln for ln in open(path) if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(lines))))


class TestConfig:
    def test_defaults_are_desk(self):
        cfg = RunConfig()
        assert (cfg.n, cfg.reps) == (PRESETS["desk"]["n"], PRESETS["desk"]["reps"])
        assert len(cfg.s_grid) == 17 and cfg.s_grid[0] == 0.2 and cfg.s_grid[-1] == 1.0

    def test_full_preset(self):
        cfg = RunConfig.from_dict({"preset": "full"})
        assert (cfg.n, cfg.reps) == (20000, 50)

    @pytest.mark.parametrize("bad", [
        {"eps": 1.5}, {"s_grid": []}, {"s_grid": [0.5, -1.0]}, {"reps": 1}, {"n": 1}, {"iterations": [0]},
        {"preset": "huge"}, {"workers": 0}, {"typo_key": 1}, {"lowdeg": {"D": 5}},
        {"lowdeg": {"n_list": [24, 12]}}, {"lowdeg": {"psi": "cube"}},
    ])
    def test_rejects(self, bad):
        with pytest.raises(InvalidParameter):
            RunConfig.from_dict(bad)

    def test_grid_spec_and_yaml(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"s_grid": {"start": 0.5, "stop": 1.0, "num": 3}, "seed": 9}))
        cfg = RunConfig.from_yaml(path)
        np.testing.assert_allclose(cfg.s_grid, [0.5, 0.75, 1.0])
        assert cfg.seed == 9

    def test_override(self):
        cfg = RunConfig().override(seed=3, n=None, lowdeg_samples=100)
        assert cfg.seed == 3 and cfg.n == 4000 and cfg.lowdeg.samples == 100


class TestOutput:
    def test_csv_round_trip(self, tmp_path):
        rows = [ResultRow("q_amp", 1 / 3, s=0.5), ResultRow("mse_sim", 0.25, s=0.5, t=5, std_error=0.01, n=10, seed=1)]
        p = tmp_path / "x.csv"
        emit_csv(rows, p, {"seed": 1, "note": "hello"})
        text = p.read_text()
        assert text.startswith("# seed: 1\n# note: hello\n")
        back = read_csv(p)
        assert list(back[0]) == CSV_FIELDS
        assert float(back[0]["value"]) == 1 / 3
        assert back[0]["t"] == ""

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError, match="cannot write"):
            emit_csv([], tmp_path / "missing" / "x.csv")
        with pytest.raises(OSError, match="cannot write"):
            emit_svg([{"x": [0, 1], "y": [0, 1]}], tmp_path / "missing" / "x.svg")

    def test_svg_deterministic(self, tmp_path):
        curves = [{"x": [0, 1, 2], "y": [1, 0, 1], "kind": "dashed", "label": "a"},
                  {"x": [0, 1], "y": [0.5, 0.2], "yerr": [0.1, 0.1], "kind": "points", "label": "b"}]
        emit_svg(curves, tmp_path / "a.svg", hlines=[(0.7, "flat")])
        emit_svg(curves, tmp_path / "b.svg", hlines=[(0.7, "flat")])
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
        ET.parse(tmp_path / "a.svg")
        with pytest.raises(ValueError):
            emit_svg([{"x": [0], "y": [0], "kind": "bars"}], tmp_path / "c.svg")


class TestSweep:
    def test_small_sweep_reproducible_and_parallel_invariant(self, tmp_path):
        cfg = RunConfig.from_dict(SMALL)
        a = figure1_sweep(cfg, tmp_path / "a.csv", tmp_path / "a.svg")
        b = figure1_sweep(cfg.override(workers=2), tmp_path / "b.csv", tmp_path / "b.svg")
        assert [p.sim_mean for p in a.points] == [p.sim_mean for p in b.points]
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
        rows = read_csv(tmp_path / "a.csv")
        sims = [r for r in rows if r["quantity"] == "mse_sim"]
        assert len(sims) == 4 and all(r["std_error"] for r in sims)
        trivial = [r for r in rows if r["quantity"] == "mse_trivial"]
        np.testing.assert_allclose([float(r["value_over_s"]) for r in trivial], 2 - 2 * cfg.eps)
        checks = a.checks()
        assert checks["bayes_dominates"] and checks["extremes_coincide"]

    def test_lowdeg_report(self, tmp_path):
        cfg = RunConfig.from_dict(SMALL)
        rep = lowdeg_vs_amp_report(cfg, tmp_path / "r.csv", tmp_path / "r.svg")
        assert set(rep.table) == {(0, 6), (1, 6), (0, 8), (1, 8)}
        rows = read_csv(tmp_path / "r.csv")
        assert {r["quantity"] for r in rows} >= {"mse_amp_limit", "lowdeg_mse_D0", "lowdeg_mse_D1"}
        ET.parse(tmp_path / "r.svg")


class TestCli:
    def test_theory(self, capsys):
        assert main(["theory"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("quantity,value\n") and "q_amp,1.71526" in out

    def test_tree_list(self, capsys):
        assert main(["tree-list", "--d", "3"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 1 + 8

    def test_seed_required(self):
        for cmd in (["amp-sim"], ["mp-verify"], ["lowdeg", "--n", "6"], ["figure1"], ["report"]):
            with pytest.raises(SystemExit) as exc:
                main(cmd)
            assert exc.value.code == 2

    def test_mp_verify(self, capsys):
        assert main(["mp-verify", "--n", "6", "--d", "2", "--t", "3", "--seed", "1"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_amp_sim(self, capsys):
        assert main(["amp-sim", "--n", "300", "--t", "2", "--reps", "2", "--seed", "0"]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert len(rows) == 3 and rows[0]["seed"] == "0"

    def test_lowdeg_csv(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["lowdeg", "--d", "1", "--n", "6", "--samples", "300", "--seed", "2", "--out", str(out),
                     "--trees-only"]) == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["graph_code_A", "graph_code_B", "estimate", "std_error", "n"]
        assert {r["graph_code_A"] for r in rows} == {"1:", "2:0-1"}
        assert "optimal_mse" in out.read_text()

    def test_figure1_and_report(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(yaml.safe_dump(SMALL))
        assert main(["figure1", "--config", str(cfg), "--seed", "4", "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "figure1.csv").exists() and (tmp_path / "figure1.svg").exists()
        assert main(["report", "--config", str(cfg), "--seed", "4", "--out-dir", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "lowdeg_mse_D1" in out and (tmp_path / "report.svg").exists()

    def test_bad_prior_exit_code(self, capsys):
        assert main(["theory", "--prior", "nonsense"]) == 2
        assert "error" in capsys.readouterr().err
