import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from shelving.cli import RunConfig, main

GOLDEN = Path(__file__).parent / "golden" / "analytic_default.csv"
BARE = ["--resonance-amp-a", "0", "--resonance-amp-b", "0"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_analytic_first_row(capsys):
    code, out, _ = run(capsys, "analytic")
    assert code == 0
    first = rows(out)[0]
    assert float(first["t"]) == 0 and float(first["re_a0"]) == 1
    assert all(float(first[k]) == 0 for k in ("im_a0", "re_a1", "im_a1", "re_a2", "im_a2"))


def test_analytic_bare_norm(capsys):
    code, out, _ = run(capsys, "analytic", *BARE, "--t-stop", "200", "--points", "401")
    assert code == 0
    table = rows(out)
    t = np.array([float(r["t"]) for r in table])
    norm = np.array([float(r["norm"]) for r in table])
    np.testing.assert_allclose(norm, np.exp(-0.2 * t), rtol=0, atol=1e-12)


def test_analytic_matches_golden(capsys):
    code, out, _ = run(capsys, "analytic", "--t-stop", "100", "--points", "11")
    assert code == 0
    with GOLDEN.open() as fh:
        golden = list(csv.DictReader(fh))
    for got, want in zip(rows(out), golden, strict=True):
        for key in want:
            assert float(got[key]) == pytest.approx(float(want[key]), rel=1e-11, abs=1e-15)


def test_analytic_json(capsys):
    code, out, _ = run(capsys, "analytic", "--format", "json", "--points", "3")
    doc = json.loads(out)
    assert code == 0 and len(doc["rows"]) == 3 and doc["columns"][0] == "t"


def test_trajectory_is_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["trajectory", "--seed", "42", "--t-end", "20000", "--output", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("time,photon_kind,channel,cycle_index\n")


def test_trajectory_bare_only_gamma(capsys):
    code, out, _ = run(capsys, "trajectory", *BARE, "--t-end", "2000")
    table = rows(out)
    assert code == 0 and table
    assert {r["photon_kind"] for r in table} == {"gamma"}
    assert {r["channel"] for r in table} == {"fluorescent_gamma"}


def test_trajectory_long_run_emits_weak_photon(capsys):
    code, out, _ = run(capsys, "trajectory", "--t-end", "500000")
    kinds = {(r["photon_kind"], r["channel"]) for r in rows(out)}
    assert code == 0
    assert ("gamma_prime", "reset_gamma_prime") in kinds
    assert ("gamma", "reset_gamma") in kinds


def test_trajectory_json(capsys):
    code, out, _ = run(capsys, "trajectory", "--t-end", "1000", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["columns"] == ["time", "photon_kind", "channel", "cycle_index"]
    assert len(doc["events"]) > 10


def test_ensemble_report(capsys):
    code, out, err = run(capsys, "ensemble", "--count", "1", "--t-end", "20000")
    doc = json.loads(out)
    assert code == 0
    assert doc["schema"] == "shelving.ensemble-report/1" and doc["trajectory_count"] == 1
    assert "dark periods" in err


def test_ensemble_csv(capsys):
    code, out, _ = run(capsys, "ensemble", "--count", "2", "--t-end", "20000", "--format", "csv")
    table = rows(out)
    assert code == 0 and {r["kind"] for r in table} == {"dark", "bright"}


def test_invalid_regime_exits_2(capsys):
    code, _, err = run(capsys, "ensemble", "--weak-decay", "0.2")
    assert code == 2
    assert "weak_decay" in err and "strong_decay" in err


@pytest.mark.parametrize("flag, value", [("--strong-decay", "-1"), ("--rabi-frequency", "0"), ("--strong-photons", "0")])
def test_bad_parameters_exit_2(capsys, flag, value):
    assert run(capsys, "analytic", flag, value)[0] == 2


def test_validate_default_passes(capsys):
    code, out, _ = run(capsys, "validate")
    lines = out.splitlines()
    assert code == 0, out
    assert len(lines) == 10 and all(line.startswith("PASS") for line in lines)


def test_validate_sabotaged_epsilon_fails(capsys):
    code, out, _ = run(capsys, "validate", "--phantom-epsilon", "1.0", "--count", "5", "--samples", "500")
    assert code != 0
    assert any(line.startswith("FAIL") for line in out.splitlines())


def test_validate_bare_skips_dark_check(capsys):
    code, out, _ = run(capsys, "validate", *BARE, "--count", "20")
    assert code == 0, out
    assert "SKIP dark_survival: no dark channel (A = B = 0)" in out


def test_dump_config_round_trip(capsys, tmp_path):
    code, out, _ = run(capsys, "trajectory", "--seed", "9", "--resonance-amp-b", "0.03+0.01j", "--dump-config")
    assert code == 0
    path = tmp_path / "run.conf"
    path.write_text("# saved\n" + out)
    code, again, _ = run(capsys, "trajectory", "--config", str(path), "--dump-config")
    assert again == out
    assert "master_seed = 9" in out and "resonance_amp_b = 0.029999999999999999+0.01j" in out


def test_flags_override_config(capsys, tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("count = 7\nmaster_seed = 1\n")
    _, out, _ = run(capsys, "ensemble", "--config", str(path), "--seed", "2", "--dump-config")
    assert "count = 7" in out and "master_seed = 2" in out


def test_unknown_config_key(capsys, tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("colour = blue\n")
    code, _, err = run(capsys, "analytic", "--config", str(path))
    assert code == 2 and "colour" in err


def test_malformed_config_line(capsys, tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("just words\n")
    assert run(capsys, "analytic", "--config", str(path))[0] == 2


def test_missing_config_file(capsys, tmp_path):
    assert run(capsys, "analytic", "--config", str(tmp_path / "nope.conf"))[0] == 2


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("SHELVING_WORKERS", "3")
    assert RunConfig().worker_count == 3
    assert RunConfig(workers=2).worker_count == 2
    monkeypatch.delenv("SHELVING_WORKERS")
    assert RunConfig().worker_count == 1


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "shelving", "analytic", "--points", "2"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0].startswith("t,re_a0")
    assert math.isclose(float(proc.stdout.splitlines()[1].split(",")[1]), 1.0)
