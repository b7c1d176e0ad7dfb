import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from siws.cli import main
from siws.scenario import ScenarioFile, generate_random
from test_analysis import winner_scenario


@pytest.fixture
def sub_file(tmp_path):
    path = tmp_path / "sub.json"
    generate_random(15, 2, 1, 0.01, 1, "subcritical").save(path)
    return path


def _winner_file(tmp_path):
    sc = winner_scenario()
    sf = ScenarioFile(sc.h, ((0, sc.params),), sc.states, seed=0)
    path = tmp_path / "winner.json"
    sf.save(path)
    return path


def test_simulate_subcritical_to_zero(sub_file, tmp_path, capsys):
    out = tmp_path / "traj.csv"
    code = main(["simulate", "--scenario", str(sub_file), "--out", str(out), "--tol", "1e-14", "--steps", "1000000"])
    assert code == 0
    rows = list(csv.reader(out.open()))
    header, last = rows[0], rows[-1]
    assert len(header) == 1 + 17 + 2
    assert all(abs(float(v)) < 1e-8 for v in last[1:])
    summary = json.loads(capsys.readouterr().out)
    assert summary["converged"] is True


def test_classify_winner(tmp_path, capsys):
    assert main(["classify", "--scenario", str(_winner_file(tmp_path))]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "two-virus" and report["verdict"] == "winner(1)"


def test_classify_single(sub_file, capsys):
    assert main(["classify", "--scenario", str(sub_file)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "single" and report["viruses"][0]["regime"] == "HealthyGAS"


def test_validate_broken_file(tmp_path, capsys):
    d = json.loads(generate_random(4, 1, 1, 0.01, 0, "subcritical").dumps())
    d["initial_state"][0]["x"][0] = 1.2
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(d))
    assert main(["validate", "--scenario", str(path)]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] is False
    assert report["violations"][0]["location"] == "x_1(0)"


def test_validate_ok(sub_file, capsys):
    assert main(["validate", "--scenario", str(sub_file)]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_strict_mode(tmp_path, capsys):
    d = json.loads(generate_random(4, 1, 1, 0.01, 0, "subcritical").dumps())
    d["initial_state"][0]["x"][0] = 1.2
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(d))
    assert main(["spectrum", "--scenario", str(path), "--strict"]) == 1
    assert main(["spectrum", "--scenario", str(path)]) == 0
    assert "warning" in capsys.readouterr().err


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_io_failures(tmp_path):
    assert main(["validate", "--scenario", str(tmp_path / "missing.json")]) == 3
    junk = tmp_path / "junk.json"
    junk.write_text("{")
    assert main(["simulate", "--scenario", str(junk)]) == 3
    assert main(["simulate"]) == 3


def test_spectrum(sub_file, capsys):
    assert main(["spectrum", "--scenario", str(sub_file)]) == 0
    out = json.loads(capsys.readouterr().out)[0]
    assert out["r0"] < 1 and out["s1"] <= 1
    assert len(out["right"]) == 17 and abs(sum(out["left"]) - 1) < 1e-12


def test_equilibrium(tmp_path, capsys):
    path = tmp_path / "sup.json"
    generate_random(5, 1, 1, 0.01, 3, "supercritical").save(path)
    assert main(["equilibrium", "--scenario", str(path)]) == 0
    out = json.loads(capsys.readouterr().out)[0]
    assert out["kind"] == "endemic" and out["residual"] < 1e-10
    assert out["xbar"] == pytest.approx(np.mean(out["x"]))


def test_generate_and_reuse(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["generate", "--n", "6", "--m", "2", "--l", "2", "--seed", "7", "--target", "mixed", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert ScenarioFile.load(a).l == 2
    assert main(["generate", "--n", "2", "--m", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 2


def test_simulate_bit_identical(tmp_path):
    path = tmp_path / "s.json"
    main(["generate", "--n", "5", "--m", "1", "--l", "2", "--seed", "3", "--out", str(path)])
    outs = []
    for name in ("1.csv", "2.csv"):
        out = tmp_path / name
        main(["simulate", "--scenario", str(path), "--out", str(out), "--steps", "5000", "--stride", "10"])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    rows = list(csv.reader(io.StringIO(outs[0].decode())))
    assert {len(r) for r in rows} == {1 + 2 * 6 + 4}


def test_sweep(sub_file, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--scenario", str(sub_file), "--axis", "virus.1.B", "--values", "0.5:1.5:3", "--out", str(out), "--workers", "2"]) == 0
    rows = list(csv.reader(out.open()))
    assert [r[1] for r in rows[1:]] == ["0.5", "1.0", "1.5"]
    assert main(["sweep", "--scenario", str(sub_file)]) == 1


def test_console_script_entry_point(sub_file):
    res = subprocess.run([sys.executable, "-m", "siws.cli", "validate", "--scenario", str(sub_file)], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["passed"] is True
