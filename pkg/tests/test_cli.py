import csv
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from radlab.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, run

SMALL_COVERING = ["--set", "covering.j_max=2", "--set", "covering.k_max=32"]


def _report(out, command):
    d = json.loads((out / f"{command}.json").read_text())
    d.pop("generated_at")
    d.pop("timing", None)
    return d


def _last_json_line(text):
    return json.loads(text.strip().splitlines()[-1])


def test_classify_prints_exponent(tmp_path, capsys):
    rc = run(["classify", "--out", str(tmp_path), "--n", "2", "--s", "1", "--tau", "0",
              "--p", "2", "--q", "2"])
    assert rc == EXIT_OK
    rep = _last_json_line(capsys.readouterr().out)
    assert rep["far"]["exponent"] == "-1/2"
    assert _report(tmp_path, "classify")["pass"]


def test_classify_sweep_table(tmp_path, capsys):
    assert run(["classify", "--sweep", "--out", str(tmp_path)]) == EXIT_OK
    md = (tmp_path / "classify_sweep.md").read_text()
    assert md.startswith("|")
    assert _report(tmp_path, "classify")["results"]["sweep_violations"] == 0


def test_norm_morrey_matches_lp(tmp_path, capsys):
    assert run(["norm", "--out", str(tmp_path), "--kind", "morrey", "--p", "2", "--u", "2"]) == 0
    a = _last_json_line(capsys.readouterr().out)["value"]
    gfn = tmp_path / "input.gfn"
    assert run(["norm", str(gfn), "--out", str(tmp_path / "b"), "--lp", "--p", "2"]) == 0
    b = _last_json_line(capsys.readouterr().out)["value"]
    assert abs(a - b) <= 1e-12 * b


@pytest.mark.parametrize("argv", [
    ["covering", "--set", "covering.k_max=-1"],
    ["covering", "--set", "covering.nonsense=1"],
    ["covering", "--set", "covering.k_max"],
    ["norm", "--p", "-2"],
    ["decay", "--set", 'decay.taus=["x"]'],
])
def test_config_errors(tmp_path, capsys, argv):
    assert run(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"covering": {"j_max": 1, "k_max": 16}}))
    assert run(["covering", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rep = _report(tmp_path, "covering")
    assert rep["config"]["k_max"] == 16 and rep["pass"]
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(["covering", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_covering_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["covering", "--check", "--out", str(out)] + SMALL_COVERING) == EXIT_OK
    assert _report(a, "covering") == _report(b, "covering")
    assert (a / "covering.png").read_bytes() == (b / "covering.png").read_bytes()


def test_norm_deterministic_given_seed(tmp_path, capsys):
    outs = [tmp_path / x for x in ("a", "b", "c")]
    for out, seed in zip(outs, (5, 5, 6)):
        assert run(["norm", "--seed", str(seed), "--out", str(out), "--kind", "besov"]) == 0
    assert (outs[0] / "input.gfn").read_bytes() == (outs[1] / "input.gfn").read_bytes()
    assert (outs[0] / "input.gfn").read_bytes() != (outs[2] / "input.gfn").read_bytes()
    assert _report(outs[0], "norm") == _report(outs[1], "norm")


def test_check_failure_exit_code(tmp_path, capsys):
    argv = ["decompose", "--out", str(tmp_path), "--set", "decompose.reconstruction_tol=1e-30"]
    assert run(argv) == EXIT_OK
    assert run(argv + ["--check"]) == EXIT_CHECK
    rep = _report(tmp_path, "decompose")
    assert not rep["pass"] and not rep["checks"]["reconstruction"]
    assert rep["checks"]["ring_spread"] and rep["checks"]["monotone_in_J"]
    assert (tmp_path / "reconstruction.png").exists()


def test_decay_defaults_match_envelope(tmp_path, capsys):
    assert run(["decay", "--check", "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "decay_slopes.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["tau"] for r in rows] == ["0", "1/8", "1/4"]
    for r in rows:
        assert abs(float(r["fitted_slope"]) - float(Fraction(r["predicted_exponent"]))) <= 0.15
        assert r["pass"] == "True"
    for name in ("decay.png", "blowup.png", "decay_0.csv"):
        assert (tmp_path / name).exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "radlab", "classify", "--out", str(tmp_path),
                           "--s", "2/5"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    rep = _last_json_line(proc.stdout)
    assert rep["far"]["kind"] == "unbounded" and rep["sharpness_far"]["value"] is True
