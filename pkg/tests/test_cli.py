import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from rydstab import cli, repro
from rydstab.tables import FringeTable

PAIR = """
[system]
geometry = "pair"
v = 1.1

[gate]
scheme = "compensated"
v = "auto"

[run]
mode = "unitary"
phases = 12
"""

PAIR_MC = """
[system]
geometry = "pair"
v = 1.1

[gate]
scheme = "compensated"
v = "auto"

[noise]
preset = "noiseless"
t2_star = 3.4

[run]
mode = "mc"
shots = 1500
seed = 3
phases = 12
"""


@pytest.fixture
def cfg(tmp_path):
    def write(text, name="scenario.toml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_compensated_pair_gives_pi(cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", cfg(PAIR), "--out", str(out)]) == 0
    report = json.loads((out / "run_report.json").read_text())
    assert abs(abs(report["scalars"]["delta_phi"]) - math.pi) < 1e-6
    assert "config_hash" in report and "versions" in report and "seed" in report
    assert (out / "run_probe.csv").exists() and (out / "run_reference.csv").exists()
    assert (out / "run.log").exists()


def test_run_is_byte_identical(cfg, tmp_path):
    path = cfg(PAIR_MC)
    for d in ("a", "b"):
        assert cli.main(["run", path, "--out", str(tmp_path / d)]) == 0
    for name in ("run_probe.csv", "run_reference.csv", "run_report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_embedded_config_reproduces_outputs(cfg, tmp_path):
    from rydstab import scenario

    assert cli.main(["run", cfg(PAIR_MC), "--out", str(tmp_path / "a")]) == 0
    embedded = json.loads((tmp_path / "a" / "run_report.json").read_text())["config"]
    res = scenario.run_scenario(scenario.apply_overrides(embedded))
    scenario.write_bundle(res, tmp_path / "b")
    for name in ("run_probe.csv", "run_reference.csv", "run_report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_malformed_config_exit_2_with_field_path(cfg, capsys):
    bad = PAIR.replace('scheme = "compensated"\nv = "auto"', 'scheme = "resonant"\nomega_data = -0.9')
    assert cli.main(["validate", cfg(bad)]) == 2
    err = capsys.readouterr().err
    assert "gate.omega_data" in err or "gate/omega_data" in err
    assert ":" in err


def test_unknown_key_rejected(cfg, capsys):
    assert cli.main(["validate", cfg(PAIR + "\n[extra]\nfoo = 1\n")]) == 2
    assert cli.main(["validate", cfg(PAIR)]) == 0


def test_repro_unknown_id_lists_valid(capsys, tmp_path):
    assert cli.main(["repro", "fig9z", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    for fid in repro.REPRO_IDS:
        assert fid in err


def test_repro_fig_s3_and_golden_stability(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["repro", "figS3", "--out", str(tmp_path / d)]) == 0
    rows = read_csv(tmp_path / "a" / "figS3_curve.csv")
    at_zero = [r for r in rows if abs(float(r[next(iter(r))])) < 1e-12]
    assert at_zero
    phase_col = [k for k in rows[0] if "phase" in k][0]
    val = float(at_zero[0][phase_col])
    assert val == pytest.approx(-math.pi, abs=1e-8) or val == pytest.approx(-1.0, abs=1e-8)
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_repro_fig2f_values():
    res = repro.run_repro("fig2f", config={**repro.canonical_config("fig2f"),
                                           "repro": {"v_values": [0.5, 1.1, 2.0, 4.0], "band_points": 3}})
    header, rows = res.tables["fig2f"]
    y = [r[header.index("delta_phi_over_pi")] for r in rows]
    assert all(b > a for a, b in zip(y, y[1:])) and y[-1] < 1
    assert abs(y[1] - 0.54) <= 0.08


def test_repro_fig_s4_spread_decreasing():
    res = repro.run_repro("figS4")
    header, rows = res.tables["figS4_spread"]
    spread = [r[header.index("spread_over_pi")] for r in rows]
    assert spread[0] > spread[1] > spread[2]


def test_sweep_gate_v(cfg, tmp_path):
    assert cli.main(["sweep", cfg(PAIR), "--param", "gate.v", "--values", "0.8,1.1,1.5,2.0",
                     "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep_gate_v.csv")
    assert len(rows) == 4
    assert rows[0]["parameter"] == "gate.v"


def test_sweep_t2_star_contrast_increasing(cfg, tmp_path):
    assert cli.main(["sweep", cfg(PAIR_MC), "--param", "noise.t2_star", "--values", "1.7,3.4,6.8",
                     "--out", str(tmp_path)]) == 0
    c = [float(r["probe.contrast"]) for r in read_csv(tmp_path / "sweep_noise_t2_star.csv")]
    assert c[0] < c[1] < c[2]


def test_sweep_errors(cfg, tmp_path, capsys):
    assert cli.main(["sweep", cfg(PAIR), "--param", "gate.v", "--values", ",", "--out", str(tmp_path)]) == 2
    assert cli.main(["sweep", cfg(PAIR), "--param", "gate.omga_data", "--values", "1",
                     "--out", str(tmp_path)]) == 2
    assert "omega_data" in capsys.readouterr().err


def test_solve_comp_and_aa_phase(capsys):
    assert cli.main(["solve-comp", "--v", "1.1", "--n", "1", "--format", "json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["delta_mhz"] == pytest.approx(0.55)
    assert out["omega_mhz"] == pytest.approx(0.9526, abs=1e-4)
    assert abs(out["delta_phi_over_pi"]) == pytest.approx(1.0)
    assert cli.main(["aa-phase", "--delta", "0", "--omega", "1", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["aa_phase_rad"] == pytest.approx(-math.pi)
    assert cli.main(["solve-comp", "--v", "-1"]) == 2
    assert cli.main(["aa-phase", "--delta", "0", "--omega", "0"]) == 2


def test_fit_subcommand(tmp_path, capsys):
    phases = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    rng = np.random.default_rng(0)
    succ = rng.binomial(500, 0.5 + 0.4 * np.cos(phases - 1.0))
    p = tmp_path / "fringe.csv"
    FringeTable.from_counts(phases, succ, np.full(12, 500)).to_csv(p)
    assert cli.main(["fit", str(p), "--bootstrap", "100"]) == 0
    rows = {r["parameter"]: r for r in json.loads(capsys.readouterr().out)["fit"]}
    assert rows["phase"]["value"] == pytest.approx(1.0, abs=0.1)
    assert rows["phase"]["xi_total"] == pytest.approx(math.hypot(rows["phase"]["xi_b"], rows["phase"]["xi_f"]))


def test_numerical_failure_exit_3(tmp_path):
    phases = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    p = tmp_path / "flat.csv"
    FringeTable.from_counts(phases, np.full(12, 100), np.full(12, 100)).to_csv(p)
    assert cli.main(["fit", str(p), "--bootstrap", "50"]) == 3


def test_missing_fit_file_exit_2(tmp_path):
    assert cli.main(["fit", str(tmp_path / "nope.csv")]) == 2


def test_output_dir_from_environment(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("RYDSTAB_OUT", str(tmp_path / "env"))
    assert cli.main(["run", cfg(PAIR)]) == 0
    assert (tmp_path / "env" / "run_report.json").exists()


def test_console_entry_point(cfg):
    r = subprocess.run([sys.executable, "-m", "rydstab", "validate", cfg(PAIR)], capture_output=True, text=True)
    assert r.returncode == 0 and "ok" in r.stdout
