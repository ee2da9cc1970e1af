import json

import pytest

from prbi import cli, theory


def _write(tmp_path, text, name="c.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_simulate_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, "n: 5\nattacker_set: [0, 1]\nreplicates: 4\n")
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["id_rate"] == 1.0 and report["mc_rate"] == 0.0 and report["k"] == 2
    lines = (out / "frames.csv").read_text().splitlines()
    assert lines[0].startswith("replicate,frame,flagged")
    assert len(lines) == 1 + 4 * 100
    assert "prbi,5,2,4" in capsys.readouterr().out


def test_simulate_overrides(tmp_path):
    cfg = _write(tmp_path, "n: 5\nattacker_ratio: 0.2\n")
    out = tmp_path / "o"
    args = ["simulate", "--config", cfg, "--out", str(out), "--seed", "7", "--replicates", "2", "--method", "random_consensus"]
    assert cli.main(args) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["replicates"] == 2 and report["method"] == "random_consensus" and report["approximate"]


def test_byte_identical_outputs(tmp_path):
    cfg = _write(tmp_path, "n: 5\nattacker_set: [0, 1, 2]\nreplicates: 3\nframe_count: 30\n")
    for name in ("a", "b"):
        assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / name), "--seed", "5"]) == 0
    for f in ("frames.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    missing = str(tmp_path / "missing.yaml")
    assert cli.main(["simulate", "--config", missing]) == 2
    assert "missing.yaml" in capsys.readouterr().err
    short = _write(tmp_path, "n: 5\nframe_count: 1\n")
    assert cli.main(["simulate", "--config", short]) == 2
    unknown = _write(tmp_path, "n: 5\ncolour: red\n", "u.yaml")
    assert cli.main(["simulate", "--config", unknown]) == 2
    ok = _write(tmp_path, "n: 5\n", "ok.yaml")
    assert cli.main(["simulate", "--config", ok, "--replicates", "0"]) == 2
    assert cli.main(["sweep", "--config", ok, "--axis", "colour", "--values", "1"]) == 2
    assert cli.main(["sweep", "--config", ok, "--axis", "rounding", "--values", "up"]) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_runtime_failure_exit_1(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "n: 5\n")

    def boom(*a, **k):
        raise RuntimeError("oracle down")

    monkeypatch.setattr(cli.harness, "run_scenario", boom)
    assert cli.main(["simulate", "--config", cfg]) == 1


def test_sweep(tmp_path):
    cfg = _write(tmp_path, "n: 5\nattacker_set: [0, 1, 2]\nreplicates: 3\n")
    out = tmp_path / "s"
    assert cli.main(["sweep", "--config", cfg, "--axis", "attack_period", "--values", "1,3,5", "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("attack_period,method")
    assert [r.split(",")[0] for r in rows[1:]] == ["1", "3", "5"]
    data = json.loads((out / "sweep.json").read_text())
    assert all(d["id_rate"] == 1.0 and d["mc_rate"] == 0.0 for d in data)


def test_theory(tmp_path, capsys):
    assert cli.main(["theory", "--out", str(tmp_path)]) == 0
    assert "FAIL" not in capsys.readouterr().out
    assert (tmp_path / "theory.csv").read_text().count("pass") == 9
    assert cli.main(["theory", "--max-n", "20"]) == 0
    assert cli.main(["theory", "--max-n", "1"]) == 2


def test_theory_negative_control(monkeypatch, capsys):
    monkeypatch.setattr(theory, "p_ideal_exact", lambda n, k: theory.Fraction(1, 2**k))
    assert cli.main(["theory", "--max-n", "6"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_trace(tmp_path, capsys):
    assert cli.main(["trace", "--n", "6", "--k", "1", "--rounding", "ceil", "--frames", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "frame,m,target" and len(lines) == 6
    assert lines[1].endswith(",0.263034")
    assert cli.main(["trace", "--kind", "probabilities", "--n", "5", "--k", "2", "--frames", "10", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trace_probabilities.csv").read_text().startswith("frame,vehicle_0")
    assert cli.main(["trace", "--n", "5", "--k", "5"]) == 2


def test_calibrate(tmp_path, capsys):
    assert cli.main(["calibrate", "--out", str(tmp_path), "--frames", "500"]) == 0
    assert "separated: True" in capsys.readouterr().out
    rows = (tmp_path / "calibration.csv").read_text().splitlines()
    assert rows[0] == "bin_lo,bin_hi,benign,adversarial" and len(rows) == 21
    summary = json.loads((tmp_path / "calibration.json").read_text())
    assert 0.7 <= summary["benign_mean"] <= 0.9


def test_calibrate_disabled_attack_fails(tmp_path):
    cfg = _write(tmp_path, "n: 5\ndelta_del: 0.0\ndelta_inj: 0.0\n")
    assert cli.main(["calibrate", "--config", cfg, "--frames", "200"]) == 1


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "prbi", "theory", "--max-n", "5"], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout
