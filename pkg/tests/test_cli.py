import csv
import io
import json
import subprocess
import sys

import pytest

from ovallab import __version__, cli
from ovallab.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, EXIT_VIOLATION, run


def _csv_rows(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(body))))


def _header(text):
    return {line[2:].split(":", 1)[0]: line[2:].split(":", 1)[1].strip()
            for line in text.splitlines() if line.startswith("# ")}


def test_constants_grid(capsys):
    assert run(["constants", "--gamma-grid", "0.6:1.5:0.1"]) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)
    assert len(rows) == 11
    assert rows[0][0] == "gamma"
    assert float(rows[-1][0]) == pytest.approx(1.5)


def test_curve_eig_circle(capsys):
    assert run(["curve-eig", "--curve", "circle", "--g", "1", "--k", "3"]) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)[1:]
    assert [float(r[1]) for r in rows] == pytest.approx([1.0, 2.0, 2.0], abs=1e-10)


def test_curve_eig_json_certificate(capsys):
    assert run(["curve-eig", "--curve", "harm:n=2,a=0,b=0.2", "--certificate", "--format", "json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["result"]["certificate"]["holds"] is True
    assert doc["metadata"]["version"] == __version__


def test_lt_ratio_single_state_pair_is_numerical_failure(capsys):
    status = run(["lt-ratio", "--potential", "poschl_teller:a=2", "--gamma", "1", "--states", "2"])
    assert status == EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert "InsufficientBoundStates" in err and len(err.strip().splitlines()) == 1


def test_lt_ratio_two_states(capsys):
    assert run(["lt-ratio", "--potential", "poschl_teller:a=6", "--states", "2", "--format", "csv"]) == EXIT_OK
    (row,) = _csv_rows(capsys.readouterr().out)[1:]
    assert float(row[4]) == pytest.approx(0.21658, abs=1e-4)


@pytest.mark.parametrize("gamma", ["0.5", "1.6"])
def test_lt_ratio_gamma_range(gamma, capsys):
    assert run(["lt-ratio", "--potential", "poschl_teller:a=2", "--gamma", gamma]) == EXIT_INPUT
    assert "--gamma" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["curve-eig", "--curve", "harm:n=2,a=0,c=1"],
        ["curve-eig", "--curve", "harm:n=2,a=0,b=0.7"],
        ["curve-eig", "--g", "one"],
        ["nonsense"],
        ["lt-ratio"],
        ["bridge", "--potential", "harmonic:k=1"],
        ["constants", "--gamma-grid", "1:0:0.1"],
    ],
)
def test_invalid_input_exit_code(argv, capsys):
    assert run(argv) == EXIT_INPUT
    err = capsys.readouterr().err
    assert err.startswith("oval-lab: error:") and len(err.strip().splitlines()) == 1


def test_bridge_pair(tmp_path, capsys):
    curve_csv = tmp_path / "curve.csv"
    status = run(["bridge", "--format", "json", "--s-points", "2048", "--curve-csv", str(curve_csv)])
    assert status == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    result = doc["result"]
    assert abs(result["ratio_34"] - result["ratio_311"]) <= 1e-5
    assert _csv_rows(curve_csv.read_text())[0] == ["s", "R", "phi", "kappa"]
    assert "curve_csv" not in doc["metadata"]["config"]


def test_bridge_single(capsys):
    assert run(["bridge", "--potential", "poschl_teller:a=2", "--mode", "single", "--format", "json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["result"]["holds"] is True


def test_bridge_needs_two_states(capsys):
    assert run(["bridge", "--potential", "poschl_teller:a=2"]) == EXIT_NUMERICAL


def test_scan_rows(capsys):
    assert run(["scan", "--g", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    rows = _csv_rows(out)
    assert rows[0] == ["eps", "lambda1", "lambda2"]
    assert len(rows) == 18
    assert json.loads(_header(out)["summary"])["truncated"] is False


def test_scan_truncation_reported(capsys):
    assert run(["scan", "--eps-grid", "0.8:1.2:0.1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert len(_csv_rows(out)) == 3
    assert json.loads(_header(out)["summary"])["truncated_at"] == pytest.approx(1.0)


def test_eps_sweep_rows(capsys):
    assert run(["sweep", "--axis", "eps", "--eps-grid", "0:0.8:0.05"]) == EXIT_OK
    assert len(_csv_rows(capsys.readouterr().out)) == 18


def test_gamma_sweep_identical_across_parallelism(tmp_path):
    outs = []
    for par in ("1", "4"):
        path = tmp_path / f"gamma-{par}.csv"
        assert run(["sweep", "--axis", "gamma", "--parallelism", par, "--output", str(path)]) == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_seed_sweep_identical_across_parallelism(tmp_path):
    outs = []
    for par in ("1", "3"):
        path = tmp_path / f"seeds-{par}.csv"
        argv = ["sweep", "--axis", "seeds", "--count", "12", "--resolution", "24",
                "--parallelism", par, "--output", str(path), "--dump-dir", str(tmp_path / "dumps")]
        assert run(argv) == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    summary = json.loads(_header(outs[0].decode())["summary"])
    assert summary["count"] == 12 and summary["min"] >= 1.0 - 1e-6
    assert not (tmp_path / "dumps").exists()


def test_optimize_json_and_history(tmp_path):
    out, hist = tmp_path / "trace.json", tmp_path / "history.csv"
    argv = ["optimize", "--g", "0.25", "--restarts", "2", "--max-evals", "300",
            "--output", str(out), "--history-csv", str(hist)]
    assert run(argv) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["result"]["problem"]["restarts"] == 2
    assert _csv_rows(hist.read_text())[0] == ["eval", "value"]
    assert "history_csv" not in doc["metadata"]["config"]


def test_optimize_identical_across_parallelism(tmp_path):
    outs = []
    for par in ("1", "2"):
        path = tmp_path / f"opt-{par}.json"
        argv = ["optimize", "--g", "2", "--restarts", "2", "--max-evals", "200",
                "--parallelism", par, "--output", str(path)]
        assert run(argv) == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_metadata_header_csv(capsys):
    assert run(["curve-eig", "--resolution", "32", "--seed", "5"]) == EXIT_OK
    header = _header(capsys.readouterr().out)
    assert header["tool"] == "oval-lab"
    assert header["version"] == __version__
    assert header["seed"] == "5"
    config = json.loads(header["config"])
    assert config["resolution"] == 32 and config["method"] == "fourier_galerkin"
    assert "parallelism" not in config and "output" not in config


def test_metadata_header_json(capsys):
    assert run(["scan", "--format", "json", "--eps-grid", "0:0.2:0.1"]) == EXIT_OK
    meta = json.loads(capsys.readouterr().out)["metadata"]
    assert meta["command"] == "scan" and meta["seed"] == 0
    assert meta["config"]["eps_grid"] == "0:0.2:0.1"


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("OVAL_LAB_SEED", "42")
    assert run(["curve-eig"]) == EXIT_OK
    assert _header(capsys.readouterr().out)["seed"] == "42"
    assert run(["curve-eig", "--seed", "7"]) == EXIT_OK
    assert _header(capsys.readouterr().out)["seed"] == "7"
    monkeypatch.setenv("OVAL_LAB_SEED", "abc")
    assert run(["curve-eig"]) == EXIT_INPUT


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# oval run\ng = -1\nk = 4\nresolution = 32\n")
    assert run(["curve-eig", "--config", str(cfg)]) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)[1:]
    assert [float(r[1]) for r in rows] == pytest.approx([-1.0, 0.0, 0.0, 3.0], abs=1e-10)
    assert run(["curve-eig", "--config", str(cfg), "--k", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert len(_csv_rows(out)) == 3
    assert json.loads(_header(out)["config"])["g"] == -1.0


def test_config_file_supplies_required_option(tmp_path, capsys):
    cfg = tmp_path / "lt.cfg"
    cfg.write_text("potential = poschl_teller:a=2\ngamma = 1.5\nformat = csv\n")
    assert run(["lt-ratio", "--config", str(cfg)]) == EXIT_OK
    (row,) = _csv_rows(capsys.readouterr().out)[1:]
    assert float(row[4]) == pytest.approx(0.1875, abs=1e-4)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("colour = blue\n", "'colour'"),
        ("k = three\n", "'k'"),
        ("method = spline\n", "'method'"),
        ("just words\n", "key = value"),
    ],
)
def test_config_file_errors(tmp_path, capsys, text, fragment):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert run(["curve-eig", "--config", str(cfg)]) == EXIT_INPUT
    assert fragment in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert run(["curve-eig", "--config", str(tmp_path / "absent.cfg")]) == EXIT_INPUT


def test_violation_exit_writes_dump(tmp_path, monkeypatch, capsys):
    # a negative tolerance makes the circle itself a candidate, exercising the dump path
    monkeypatch.setattr(cli, "CONJECTURE_TOL", -1e-3)
    status = run(["curve-eig", "--resolution", "16", "--dump-dir", str(tmp_path), "--format", "json"])
    assert status == EXIT_VIOLATION
    captured = capsys.readouterr()
    assert "counterexample" in captured.err
    (dump,) = tmp_path.glob("counterexample-*.json")
    assert json.loads(captured.out)["result"]["counterexample"] == str(dump)
    assert json.loads(dump.read_text())["confirmed"] is False


def test_output_file(tmp_path):
    path = tmp_path / "constants.json"
    assert run(["constants", "--format", "json", "--output", str(path)]) == EXIT_OK
    doc = json.loads(path.read_text())
    assert doc["metadata"]["summary"]["known_bounds"]["proven_L_half"] == 0.5
    assert len(doc["result"]["rows"]) == 10


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ovallab", "curve-eig", "--k", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == EXIT_OK
    assert float(_csv_rows(proc.stdout)[1][1]) == pytest.approx(1.0, abs=1e-10)
