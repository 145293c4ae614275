import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mimoplace.cli import main


def write_scenario(path, targets=None, num_antennas=2):
    spacing = 0.15
    offsets = [(k - (num_antennas - 1) / 2) * spacing
               for k in range(num_antennas)]
    doc = {
        "radar": {"lambda_m": 0.3, "r_bin_m": 30.0, "snapshots": 128,
                  "sigma2_alpha": 1e-4, "sigma2_w": 1.0,
                  "powers_w": [1.0] * num_antennas},
        "array": {"mode": "transceiver",
                  "tx": [[x, 0.0] for x in offsets]},
        "constraints": {"d_m": 0.3, "e_m": 0.6},
        "targets": targets if targets is not None else
        [{"x_m": 410.0, "y_m": -710.0, "xi": 3.0, "zeta": 3.0}],
    }
    path.write_text(json.dumps(doc))
    return path


def read_csv(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


@pytest.fixture
def scenario_file(tmp_path):
    return write_scenario(tmp_path / "scen.json")


class TestCrlbCommand:
    def test_success(self, tmp_path, scenario_file):
        out = tmp_path / "out"
        rc = main(["crlb", "--scenario", str(scenario_file), "--out",
                   str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics) == {"trace", "det", "max_eig", "cond"}
        assert metrics["trace"] > 0
        rows = read_csv(out / "fim.csv")
        assert rows[0] == ["row", "col", "value"]
        assert len(rows) == 1 + 16

    def test_duplicate_targets_exit_2(self, tmp_path):
        target = {"cell": 28, "theta_rad": -1.0472, "beta": 0.33,
                  "xi": 3.0, "zeta": 3.0}
        scen = write_scenario(tmp_path / "dup.json",
                              targets=[target, dict(target)])
        rc = main(["crlb", "--scenario", str(scen), "--out",
                   str(tmp_path / "o")])
        assert rc == 2

    def test_missing_file_exit_1(self, tmp_path, capsys):
        rc = main(["crlb", "--scenario", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "not found" in capsys.readouterr().err

    def test_manifest_lists_outputs(self, tmp_path, scenario_file):
        out = tmp_path / "out"
        main(["crlb", "--scenario", str(scenario_file), "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        written = {p.name for p in out.iterdir()}
        assert set(manifest["outputs"]) == written
        assert manifest["subcommand"] == "crlb"
        assert manifest["wall_clock_s"] >= 0


class TestPlaceCommand:
    def test_single_separate_analytic(self, tmp_path):
        doc = {
            "array": {"mode": "separate",
                      "tx": [[-0.1, 0.0], [0.1, 0.0]],
                      "rx": [[0.0, -0.1], [0.0, 0.1]]},
            "targets": [{"x_m": 410.0, "y_m": -710.0, "xi": 3.0,
                         "zeta": 3.0}],
        }
        scen = tmp_path / "sep.json"
        scen.write_text(json.dumps(doc))
        out = tmp_path / "out"
        rc = main(["place", "single", "--scenario", str(scen), "--out",
                   str(out)])
        assert rc == 0
        sol = json.loads((out / "placement.json").read_text())
        assert sol["gap"] <= 1e-6
        assert sol["bound"] == pytest.approx(4 * 0.36, rel=1e-6)
        # optimized geometry is valid scenario input again
        reloaded = (out / "geometry.json").read_text()
        from mimoplace import load_scenario
        assert load_scenario(reloaded).num_targets == 1

    def test_single_rejects_two_targets(self, tmp_path, capsys):
        targets = [{"cell": 28, "theta_rad": -1.0, "beta": 0.33,
                    "xi": 3.0, "zeta": 3.0},
                   {"cell": 28, "theta_rad": 1.0, "beta": 0.66,
                    "xi": 3.0, "zeta": 3.0}]
        scen = write_scenario(tmp_path / "two.json", targets=targets,
                              num_antennas=4)
        rc = main(["place", "single", "--scenario", str(scen), "--out",
                   str(tmp_path / "o")])
        assert rc == 1
        assert "place multi" in capsys.readouterr().err

    def test_multi_echoes_config(self, tmp_path):
        targets = [{"cell": 28, "theta_rad": -1.0, "beta": 0.33,
                    "xi": 3.0, "zeta": 3.0},
                   {"cell": 28, "theta_rad": 1.0, "beta": 0.66,
                    "xi": 3.0, "zeta": 3.0}]
        scen = write_scenario(tmp_path / "two.json", targets=targets,
                              num_antennas=3)
        out = tmp_path / "out"
        rc = main(["place", "multi", "--scenario", str(scen), "--out",
                   str(out), "--restarts", "2", "--patience", "2",
                   "--sampler-std", "0.2", "--seed", "9"])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["restarts"] == 2
        assert manifest["config"]["patience"] == 2
        assert manifest["config"]["sampler_std"] == 0.2
        assert manifest["seed"] == 9
        rows = read_csv(out / "trace.csv")
        assert rows[0] == ["restart", "inner_iter", "cost", "accepted"]
        assert len(rows) >= 2


class TestSweepCommand:
    def test_spacing_row_count(self, tmp_path, scenario_file):
        out = tmp_path / "out"
        rc = main(["sweep", "--scenario", str(scenario_file), "--axis",
                   "spacing", "--range", "0.15:1.5:25", "--out", str(out)])
        assert rc == 0
        rows = read_csv(out / "sweep.csv")
        assert rows[0] == ["axis_value", "geometry", "trace", "det",
                           "max_eig"]
        assert len(rows) == 1 + 25

    def test_seed_reproducible_bytes(self, tmp_path, scenario_file):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            rc = main(["sweep", "--scenario", str(scenario_file), "--axis",
                       "spacing", "--range", "0.15:1.5:5", "--seed", "7",
                       "--out", str(out)])
            assert rc == 0
        assert (out1 / "sweep.csv").read_bytes() == \
            (out2 / "sweep.csv").read_bytes()

    def test_bad_range_spec(self, tmp_path, scenario_file, capsys):
        rc = main(["sweep", "--scenario", str(scenario_file), "--axis",
                   "spacing", "--range", "nope", "--out",
                   str(tmp_path / "o")])
        assert rc == 1


class TestSimulateCommand:
    def test_row_count(self, tmp_path, scenario_file):
        out = tmp_path / "out"
        rc = main(["simulate", "--scenario", str(scenario_file), "--snr",
                   "20:30:2", "--trials", "4", "--geometries",
                   "ula,random", "--out", str(out), "--seed", "1"])
        assert rc == 0
        rows = read_csv(out / "rmse.csv")
        assert rows[0] == ["snr_db", "geometry", "target", "rmse_m",
                           "crlb_m", "trials", "failures"]
        assert len(rows) == 1 + 2 * 2
        labels = {r[1] for r in rows[1:]}
        assert labels == {"ula", "random"}

    def test_reproducible(self, tmp_path, scenario_file):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main(["simulate", "--scenario", str(scenario_file),
                       "--snr", "25:25:1", "--trials", "3",
                       "--geometries", "ula", "--out", str(out),
                       "--seed", "11"])
            assert rc == 0
            outs.append((out / "rmse.csv").read_bytes())
        assert outs[0] == outs[1]


class TestBoundCommand:
    def test_interval_table(self, tmp_path, scenario_file):
        out = tmp_path / "out"
        rc = main(["bound", "--scenario", str(scenario_file), "--dtheta",
                   "0:3.1416:50", "--out", str(out)])
        assert rc == 0
        rows = read_csv(out / "bound.csv")
        assert rows[0] == ["dtheta_rad", "lo_rad", "hi_rad", "width_rad"]
        assert len(rows) == 1 + 50
        assert float(rows[1][1]) == 0.0
        widths = [float(r[3]) for r in rows[1:]]
        assert all(b >= a - 1e-12 for a, b in zip(widths, widths[1:]))


class TestEntryPoint:
    def test_console_script_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "mimoplace.cli", "--help"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "crlb" in proc.stdout

    def test_unknown_subcommand_exit_1(self, capsys):
        rc = main(["frobnicate"])
        assert rc == 1
