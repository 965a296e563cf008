import csv
import json
import math
import os
import subprocess
import sys
from collections import Counter

import pytest

from polylayer import cli
from polylayer.errors import NumericalError


def _outputs(path):
    return sorted(p for p in os.listdir(path))


def _json(path):
    files = [f for f in _outputs(path) if f.endswith(".json")]
    assert len(files) == 1
    with open(os.path.join(path, files[0]), encoding="utf-8") as fh:
        return files[0], json.load(fh)


def test_vguide_right_angle(tmp_path, capsys):
    status = cli.main(["vguide", "--theta", "0.7854", "--L", "4", "--h", "0.025", "--out", str(tmp_path)])
    assert status == cli.EXIT_OK
    name, doc = _json(tmp_path)
    assert name == f"vguide-{cli.config_hash('vguide', doc['config'])}.json"
    assert doc["count"] == 1 and doc["command"] == "vguide"
    line = capsys.readouterr().out.strip()
    assert line.startswith("vguide threshold=") and "count=1" in line and "lambda1=" in line


def test_theta_out_of_range(tmp_path, capsys):
    status = cli.main(["vguide", "--theta", "2.0", "--out", str(tmp_path)])
    assert status == cli.EXIT_CONFIG
    assert "theta must lie in (0, π/2)" in capsys.readouterr().err
    assert _outputs(tmp_path) == []


def test_sweep_csv_rows(tmp_path):
    status = cli.main(["sweep", "--family", "vguide", "--thetas", "0.4:1.4:0.2", "--out", str(tmp_path)])
    assert status == cli.EXIT_OK
    files = _outputs(tmp_path)
    assert {f.rsplit(".", 1)[1] for f in files} == {"json", "csv", "svg"}
    with open(tmp_path / next(f for f in files if f.endswith(".csv")), encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    per_j = Counter(r["j"] for r in rows)
    assert per_j and all(n == 6 for n in per_j.values())
    doc = json.loads((tmp_path / next(f for f in files if f.endswith(".json"))).read_text())
    assert doc["monotone"] is True
    assert all(v != "fail" for row in doc["verdicts"].values() for v in row)


def test_grid_is_inclusive():
    assert cli.parse_grid("0.4:1.4:0.2") == pytest.approx([0.4, 0.6, 0.8, 1.0, 1.2, 1.4])
    assert cli.parse_grid("0.4:1.4:0.2")[-1] == 1.4
    assert cli.parse_grid("0.1, 0.3") == [0.1, 0.3]
    assert cli.parse_grid("0.5:0.5:0.1") == [0.5]
    for bad in ("0.1:0.2", "0.1:0.5:0", "0.1:0.5:-0.1"):
        with pytest.raises(ValueError):
            cli.parse_grid(bad)


def test_config_file_and_flag_override(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# coarse right-angle guide\ntheta = 0.7854\nh = 0.1   # coarse\nk = 2\n")
    raw = cli.read_config_file(conf)
    assert raw == {"theta": "0.7854", "h": "0.1", "k": "2"}
    cfg = cli.resolve_config("vguide", raw, {"h": "0.05"})
    assert cfg["h"] == 0.05 and cfg["theta"] == 0.7854 and cfg["k"] == 2
    assert cfg["L"] == 4.0 and cfg["formats"] == ["json"]
    out = tmp_path / "out"
    assert cli.main(["vguide", "--config", str(conf), "--h", "0.05", "--out", str(out)]) == 0
    _, doc = _json(out)
    assert doc["discretization"]["h"] == 0.05


def test_unknown_key_rejected(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("theta = 0.5\ncolour = blue\n")
    assert cli.main(["vguide", "--config", str(conf), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "colour" in capsys.readouterr().err
    conf.write_text("theta 0.5\n")
    assert cli.main(["vguide", "--config", str(conf)]) == cli.EXIT_CONFIG


@pytest.mark.parametrize("argv, word", [
    (["cone", "--theta", "0.5", "--modes", "0,-1"], "modes"),
    (["vguide", "--theta", "0.5", "--h", "-1"], "h"),
    (["vguide", "--theta", "0.5", "--formats", "csv"], "formats"),
    (["threshold", "--beta", "4"], "beta"),
    (["threshold", "--beta", "1", "--levels", "2"], "levels"),
    (["sweep", "--thetas", "0.8,0.6"], "thetas"),
    (["sweep", "--family", "torus", "--thetas", "0.5"], "family"),
    (["trihedral", "--alphas", "1,1"], "alphas"),
    (["layer"], "theta"),
    (["vguide", "--theta", "abc"], "theta"),
    (["demo-nonmonotone", "--eps", "2"], "eps"),
])
def test_validation_names_parameter(argv, word, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert word in capsys.readouterr().err
    assert _outputs(tmp_path) == []


def test_no_command_exit_code(capsys):
    assert cli.main([]) == cli.EXIT_CONFIG


def test_bitwise_determinism_and_rerun(tmp_path):
    argv = ["vguide", "--theta", "0.6", "--h", "0.05", "--k", "2"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.main(argv + ["--out", str(a)]) == 0
    assert cli.main(argv + ["--out", str(b)]) == 0
    (name_a,), (name_b,) = _outputs(a), _outputs(b)
    assert name_a == name_b
    text = (a / name_a).read_text()
    assert text == (b / name_b).read_text()
    assert "out" not in json.loads(text)["config"]
    # the result file reproduces its own run
    assert cli.main(["vguide", "--config", str(a / name_a), "--out", str(c)]) == 0
    assert _outputs(c) == [name_a]
    assert (c / name_a).read_text() == text


def test_no_temporary_files_left(tmp_path):
    assert cli.main(["sweep", "--thetas", "0.5,0.9", "--h", "0.1", "--out", str(tmp_path)]) == 0
    assert not [f for f in _outputs(tmp_path) if f.startswith(".tmp")]
    assert len(_outputs(tmp_path)) == 3


def test_write_atomic_cleans_up_on_failure(tmp_path, monkeypatch):
    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        cli.write_atomic(str(tmp_path / "x.json"), "{}")
    assert _outputs(tmp_path) == []


def test_timing_is_opt_in(tmp_path):
    assert cli.main(["vguide", "--theta", "0.6", "--h", "0.1", "--out", str(tmp_path)]) == 0
    _, doc = _json(tmp_path)
    assert "wall_clock" not in doc
    timed = tmp_path / "timed"
    assert cli.main(["vguide", "--theta", "0.6", "--h", "0.1", "--timing", "yes", "--out", str(timed)]) == 0
    _, doc = _json(timed)
    assert doc["wall_clock"] >= 0


def test_threshold_command(tmp_path, capsys):
    assert cli.main(["threshold", "--beta", str(math.pi), "--out", str(tmp_path)]) == 0
    _, doc = _json(tmp_path)
    assert doc["threshold"] == math.pi ** 2 and doc["report"] is None
    assert "threshold=9.869604401" in capsys.readouterr().out


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    def fail(*args, **kwargs):
        raise NumericalError("no convergence", residuals=[1.0])

    monkeypatch.setattr(cli.spectra, "solve_vguide", fail)
    assert cli.main(["vguide", "--theta", "0.5", "--out", str(tmp_path)]) == cli.EXIT_NUMERICAL
    assert "no convergence" in capsys.readouterr().err
    assert _outputs(tmp_path) == []


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "polylayer", "vguide", "--theta", "2.0"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
    assert "theta" in proc.stderr
