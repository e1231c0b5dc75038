import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from cknlab.cli import dumps, main

GOLDEN = Path(__file__).parent / "golden"
EXPECTED_EXIT = {"pass_small": 0, "tight_tol": 1, "degenerate": 2}


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.mark.parametrize("name", sorted(EXPECTED_EXIT))
def test_golden_exit_codes(name, tmp_path, monkeypatch):
    monkeypatch.delenv("CKNLAB_THREADS", raising=False)
    out = tmp_path / "report.json"
    assert main(["verify", "--config", str(GOLDEN / f"{name}.json"), "--out", str(out)]) == EXPECTED_EXIT[name]


@pytest.mark.parametrize("name", ["pass_small", "tight_tol"])
def test_golden_reports_are_byte_identical(name, tmp_path, monkeypatch):
    monkeypatch.setenv("CKNLAB_THREADS", "1")
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        main(["verify", "--config", str(GOLDEN / f"{name}.json"), "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] == (GOLDEN / "expected" / f"{name}.json").read_bytes()


def test_degenerate_message(capsys):
    assert main(["verify", "--config", str(GOLDEN / "degenerate.json")]) == 2
    assert "DEGENERATE" in capsys.readouterr().err


def test_tight_tolerance_reports_residuals(tmp_path):
    out = tmp_path / "r.json"
    main(["verify", "--config", str(GOLDEN / "tight_tol.json"), "--out", str(out)])
    doc = json.loads(out.read_text())
    assert doc["summary"]["failed"] > 0
    assert all("residual_rel" in r for r in doc["results"])


def test_tol_override(tmp_path):
    out = tmp_path / "r.json"
    assert main(["verify", "--config", str(GOLDEN / "pass_small.json"), "--tol", "1e-16",
                 "--out", str(out)]) == 1
    assert json.loads(out.read_text())["tol"] == 1e-16


def test_parallel_matches_serial(tmp_path, monkeypatch):
    cfg = json.loads((GOLDEN / "pass_small.json").read_text())
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("CKNLAB_THREADS", threads)
        out = tmp_path / f"r{threads}.json"
        main(["verify", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)])
        outs.append(json.loads(out.read_text()))
    assert outs[0] == outs[1]


@pytest.mark.parametrize("mutate,needle", [
    (lambda c: c.update(schema="cknlab/2"), "schema"),
    (lambda c: c.update(colour="blue"), "colour"),
    (lambda c: c["suite"][0].update(extra=1), "invalid"),
    (lambda c: c.pop("suite"), "suite"),
])
def test_bad_configs_exit_2(mutate, needle, tmp_path, capsys):
    cfg = json.loads((GOLDEN / "pass_small.json").read_text())
    mutate(cfg)
    assert main(["verify", "--config", write(tmp_path, "c.json", cfg)]) == 2
    assert needle in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert main(["verify", "--config", str(tmp_path / "nope.json")]) == 2


def test_integrability_failure_exit_2(tmp_path):
    cfg = {"schema": "cknlab/1", "command": "verify", "threads": 1, "suite": [
        {"kind": "ckn", "params": {"N": 3, "p": 2, "a": 2.0, "b": 0.5},
         "family": {"family": "gauss_power", "s": 0, "q": 1, "m": 2}}]}
    out = tmp_path / "r.json"
    assert main(["verify", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 2
    assert json.loads(out.read_text())["summary"]["skipped"] > 0


@pytest.mark.parametrize("args,text", [
    (["--N", "3", "--p", "2", "--a", "-1", "--b", "0"], "regime R1, constant 1.5, extremizer plain_exp"),
    (["--N", "5", "--p", "3", "--a", "0", "--b", "0"], "regime R1, constant 1.3333333333333333, extremizer plain_exp"),
    (["--N", "3", "--p", "2", "--a", "1", "--b", "0"], "regime DEGENERATE"),
])
def test_constants_text(args, text, capsys):
    assert main(["constants", *args]) == 0
    assert capsys.readouterr().out.startswith(text)


def test_constants_json(capsys):
    main(["constants", "--N", "5", "--p", "3", "--a", "0", "--b", "0", "--format", "json"])
    doc = json.loads(capsys.readouterr().out)
    assert doc["exact"] == "4/3" and doc["regime"] == "R1"


def test_stability_command(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["stability", "--config", str(GOLDEN / "stability_t8.json"), "--out", str(out)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("empirical_C=")
    rows = list(csv.DictReader(out.open()))
    assert [r["status"] for r in rows] == ["ok", "ok", "sentinel"]
    assert float(line.split("=")[1]) == min(float(r["ratio"]) for r in rows[:2])
    assert out.read_bytes().count(b"\r") == 0


def test_stability_unbalanced_exit_2(tmp_path):
    cfg = json.loads((GOLDEN / "stability_t8.json").read_text())
    cfg["params"]["a"] = 0.0
    assert main(["stability", "--config", write(tmp_path, "c.json", cfg), "--out", str(tmp_path / "s.csv")]) == 2


def test_bessel_derive_then_solve(tmp_path):
    V = json.dumps({"weight": "power", "gamma": 0.0})
    phi = json.dumps({"family": "gauss_power", "s": -0.5, "q": 0.0, "m": 1.0})
    W_path = tmp_path / "W.json"
    assert main(["bessel", "derive", "--V", V, "--phi", phi, "--Neff", "3", "--p", "2",
                 "--out", str(W_path)]) == 0
    W_doc = json.loads(W_path.read_text())
    assert W_doc["weight"] == "tabulated" and "closed_form" in W_doc
    sol = tmp_path / "phi.json"
    assert main(["bessel", "solve", "--V", V, "--W", str(W_path), "--Neff", "3", "--p", "2",
                 "--r0", "0.01", "--R", "1", "--out", str(sol)]) == 0
    doc = json.loads(sol.read_text())
    assert doc["positive"] is True
    assert doc["certified_interval"] == [0.01, 1.0]


def test_bessel_negative_phi_exit_2(tmp_path):
    V = json.dumps({"weight": "power", "gamma": 0.0})
    # exp(-r) (1 - 1000 bump) dips below zero inside [1, 2]
    phi = json.dumps({"family": "perturbed_extremizer", "eps": -1000.0, "lo": 1.0, "hi": 2.0,
                      "base": {"family": "gauss_power", "s": 0.0, "q": 1.0, "m": 1.0}})
    assert main(["bessel", "derive", "--V", V, "--phi", phi, "--Neff", "3", "--p", "2"]) == 2


def test_plotdata_kinds(tmp_path):
    rep = tmp_path / "r.json"
    main(["verify", "--config", str(GOLDEN / "pass_small.json"), "--out", str(rep)])
    out = tmp_path / "res.csv"
    assert main(["plotdata", "--in", str(rep), "--kind", "residuals", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["index", "identity_id", "residual_rel"] and len(rows) == 38

    scan = tmp_path / "s.csv"
    main(["stability", "--config", str(GOLDEN / "stability_t8.json"), "--out", str(scan)])
    out2 = tmp_path / "land.csv"
    assert main(["plotdata", "--in", str(scan), "--kind", "ratio_landscape", "--out", str(out2)]) == 0
    assert next(csv.reader(out2.open()))[-1] == "ratio"

    V = json.dumps({"weight": "power", "gamma": 0.0})
    W = json.dumps({"weight": "power", "gamma": -2.0, "coef": 0.25})
    sol = tmp_path / "phi.json"
    main(["bessel", "solve", "--V", V, "--W", W, "--Neff", "3", "--p", "2", "--r0", "0.01",
          "--R", "1", "--out", str(sol)])
    out3 = tmp_path / "prof.csv"
    assert main(["plotdata", "--in", str(sol), "--kind", "profile", "--out", str(out3)]) == 0
    assert len(list(csv.reader(out3.open()))) == 257


def test_dumps_is_strict_json():
    text = dumps({"x": math.inf, "y": [math.nan, 0.1]})
    assert json.loads(text) == {"x": "inf", "y": ["nan", 0.1]}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cknlab", "constants", "--N", "3", "--p", "2",
                           "--a", "-1", "--b", "0"], capture_output=True, text=True)
    assert proc.returncode == 0 and "R1" in proc.stdout
