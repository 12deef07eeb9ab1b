import json
import subprocess
import sys

import pytest

from relcommit import cli, config
from relcommit.protocol import CausalityError


def run_main(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bound_default(capsys, tmp_path):
    out_file = tmp_path / "bound.json"
    code, out, _ = run_main(capsys, "bound", "--out", str(out_file))
    assert code == 0
    assert "0.0567849" in out
    report = json.loads(out_file.read_text())
    assert report["bound"]["eps_b"] == pytest.approx(0.0568, abs=1e-4)
    assert report["config"]["security.n_tol"] == 107


def test_bound_sweep(capsys):
    code, out, _ = run_main(capsys, "bound", "--sweep", "60:71:10")
    assert code == 0
    lines = [s for s in out.splitlines() if s.strip().startswith(("60", "70"))]
    assert len(lines) == 2


@pytest.mark.parametrize("sweep", ["60:50:1", "a:b:c", "10:20:0"])
def test_bad_sweep(capsys, sweep):
    code, _, err = run_main(capsys, "bound", "--sweep", sweep)
    assert code == 1 and "bound.sweep" in err


def test_zero_repetitions_gives_empty_table(capsys):
    code, out, _ = run_main(capsys, "run", "--seed", "1", "--reps", "0")
    assert code == 0
    assert "accepted 0/0" in out


def test_run_requires_seed(capsys):
    code, _, err = run_main(capsys, "run", "--reps", "1")
    assert code == 1 and "run.seed" in err


def test_malformed_config_writes_nothing(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("source.mu = 0.183\nthis line has no separator\n")
    out_file = tmp_path / "report.json"
    code, _, err = run_main(capsys, "bound", "--config", str(cfg), "--out", str(out_file))
    assert code != 0 and ":2" in err
    assert not out_file.exists()
    assert not list(tmp_path.glob(".relcommit-*"))


def test_unit_error_names_the_field(capsys):
    code, _, err = run_main(capsys, "bound", "--set", "detector.dead_time=30")
    assert code == 1 and "detector.dead_time" in err and "unit" in err
    code, _, err = run_main(capsys, "bound", "--set", "layout.d_alice_a0=9.3kg")
    assert code == 1 and "layout.d_alice_a0" in err


def test_unknown_key(capsys):
    code, _, err = run_main(capsys, "bound", "--set", "source.colour=blue")
    assert code == 1 and "source.colour" in err


def test_invalid_subcommand(capsys):
    code, _, _ = run_main(capsys, "teleport")
    assert code == 1


def test_geometry_field_run(capsys, tmp_path):
    out_file = tmp_path / "geo.json"
    code, out, _ = run_main(capsys, "geometry", "--field-run", "1", "--out", str(out_file))
    assert code == 0
    report = json.loads(out_file.read_text())
    assert report["geometry"]["t_commit_upper_us"] == pytest.approx(60.54, abs=0.01)
    assert "60.54" in out


def test_geometry_from_config_timings(capsys, tmp_path):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("timing.t0 = 1.53us\ntiming.t_b0 = 92.85us\ntiming.t_b1 = 102.74us\n")
    code, out, _ = run_main(capsys, "geometry", "--config", str(cfg))
    assert code == 0 and "60.54" in out


def test_geometry_missing_timing_field(capsys):
    code, _, err = run_main(capsys, "geometry", "--set", "timing.t0=0s", "--set", "timing.t_b0=90us")
    assert code == 1 and "timing.t_b1" in err


def test_attack_random_assign(capsys, tmp_path):
    out_file = tmp_path / "attack.json"
    code, out, _ = run_main(
        capsys, "attack", "--strategy", "strong_pulse_double_click", "--countermeasure", "random_assign",
        "--seed", "3", "--reps", "2000", "--out", str(out_file),
    )
    assert code == 0
    report = json.loads(out_file.read_text())
    assert report["attack"]["trials"] == 2000
    assert abs(report["attack"]["probability"] - 0.5) < 0.04


def test_reports_are_byte_identical(capsys, tmp_path):
    f = tmp_path / "a.json"
    blobs = []
    for _ in range(2):
        assert run_main(capsys, "run", "--seed", "5", "--reps", "2", "--out", str(f))[0] == 0
        blobs.append(f.read_bytes())
    assert blobs[0] == blobs[1]
    report = json.loads(blobs[0])
    assert report["config"]["run.seed"] == 5
    assert len(report["rows"]) == 2


def test_internal_failure_exit_code(capsys, monkeypatch):
    def boom(cfg):
        raise CausalityError("message delivered before it was sent")

    monkeypatch.setattr(cli, "cmd_bound", boom)
    code, _, err = run_main(capsys, "bound")
    assert code == 2 and "internal" in err

    monkeypatch.setattr(cli, "cmd_bound", lambda cfg: 1 / 0)
    assert run_main(capsys, "bound")[0] == 2


def test_parse_quantity_units():
    assert config.parse_quantity("k", "9.3km", "length") == pytest.approx(9300.0)
    assert config.parse_quantity("k", "1.5%", "fraction") == pytest.approx(0.015)
    assert config.parse_quantity("k", "165deg", "angle") == pytest.approx(2.8797932657906435)
    assert config.parse_quantity("k", "30ns", "time") == pytest.approx(30e-9)


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "relcommit.cli", "bound"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.0567849" in res.stdout
