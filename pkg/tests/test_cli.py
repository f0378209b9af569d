import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from pram_forge.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_optimize_scenario_i(capsys):
    code, out = run(capsys, "optimize", "--p", "0.3,0.1,0.2,0.08,0.02,0.04,0.06,0.1,0.01,0.09", "--alpha", "1")
    assert code == 0
    d = json.loads(out)
    assert d["method"] == "exhaustive" and sum(d["pattern_summary"].values()) == 10


def test_optimize_binary(capsys):
    code, out = run(capsys, "optimize", "--p", "0.48,0.52", "--alpha", "0.05")
    assert code == 0
    q = json.loads(out)["q_star"]
    assert q[0] == q[1] == pytest.approx(math.exp(0.05) / (1 + math.exp(0.05)), abs=1e-15)


@pytest.mark.parametrize("alpha", ["-1", "inf", "nan", "abc"])
def test_bad_alpha(capsys, alpha):
    assert run(capsys, "optimize", "--p", "0.5,0.5", "--alpha", alpha)[0] == 2


def test_bad_p(capsys):
    assert run(capsys, "optimize", "--p", "0.5,0.6", "--alpha", "1")[0] == 2
    assert run(capsys, "optimize", "--p", "0.5,0.5", "--S", "3", "--alpha", "1")[0] == 2
    assert run(capsys, "optimize", "--alpha", "1")[0] == 2


def test_optimizer_failure_exit(capsys):
    assert run(capsys, "optimize", "--p", ",".join(["0.125"] * 8), "--alpha", "5")[0] == 3
    assert run(capsys, "optimize", "--p", "0.2,0.2,0.2,0.2,0.2", "--alpha", "1.5",
               "--strategy", "exhaustive")[0] == 3


def test_config_merge(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"p": [0.3, 0.7], "alpha": 2.0}))
    code, out = run(capsys, "optimize", "--config", str(cfg), "--alpha", "0.5")
    assert code == 0
    q = json.loads(out)["q_star"][0]
    # the command-line alpha wins over the file
    assert q == pytest.approx(math.exp(0.5) / (1 + math.exp(0.5)), abs=1e-15)


def test_config_errors(tmp_path, capsys):
    assert run(capsys, "optimize", "--config", str(tmp_path / "nope.json"))[0] == 5
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(capsys, "optimize", "--config", str(bad))[0] == 2


def test_certify(capsys):
    code, out = run(capsys, "certify", "--q", "0.9,0.9", "--alpha", "0.5")
    assert code == 4
    d = json.loads(out)
    assert d["pass"] is False and d["dp_ratio"] == pytest.approx(9.0, abs=1e-12)
    code, out = run(capsys, "certify", "--q", "0.6,0.6", "--alpha", "0.5")
    assert code == 0 and json.loads(out)["pass"] is True


def _csv(tmp_path, rows):
    f = tmp_path / "in.csv"
    with open(f, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "sex"])
        w.writerows([i, v] for i, v in enumerate(rows))
    return f


def test_privatize_round_trip(tmp_path, capsys):
    rng = np.random.default_rng(0)
    src = _csv(tmp_path, rng.choice(["F", "M"], size=500, p=[0.48, 0.52]))
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["privatize", "--input", str(src), "--column", "sex", "--alpha", "0.05", "--seed", "7"]
    assert run(capsys, *args, "--output", str(out1))[0] == 0
    assert run(capsys, *args, "--output", str(out2), "--threads", "4")[0] == 0
    assert out1.read_bytes() == out2.read_bytes()
    manifest = json.loads((tmp_path / "a.csv.run.json").read_text())
    assert manifest["certificate"]["pass"] is True and manifest["seed"] == 7
    with open(out1) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sex"] and len(rows) == 501 and {r[0] for r in rows[1:]} <= {"F", "M"}


def test_privatize_certificate_failure(tmp_path, capsys):
    src = _csv(tmp_path, ["F", "M", "F"])
    out = tmp_path / "o.csv"
    code, text = run(capsys, "privatize", "--input", str(src), "--column", "sex", "--alpha", "0.5",
                     "--q", "0.9,0.9", "--output", str(out))
    assert code == 4 and not out.exists()
    assert json.loads(text)["certificate"]["pass"] is False


def test_privatize_io_errors(tmp_path, capsys):
    src = _csv(tmp_path, ["F", "M"])
    base = ["privatize", "--alpha", "1", "--output", str(tmp_path / "o.csv")]
    assert run(capsys, *base, "--input", str(tmp_path / "missing.csv"), "--column", "sex")[0] == 5
    assert run(capsys, *base, "--input", str(src), "--column", "age")[0] == 5
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(capsys, *base, "--input", str(empty), "--column", "sex")[0] == 5


def test_mi_curve(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    assert run(capsys, "mi-curve", "--p", "0.48,0.52", "--alpha", "0.05", "--out", str(out))[0] == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    mi = [float(r["mi_exact"]) for r in rows]
    assert len(mi) == 6
    assert max(mi[0], mi[-1]) == max(mi)
    assert min(mi) < mi[0]


def test_mi_curve_plugin_column(capsys):
    code, out = run(capsys, "mi-curve", "--p", "0.48,0.52", "--alpha", "1", "--n", "2000",
                    "--replications", "2", "--grid-points", "3")
    assert code == 0
    header = out.splitlines()[0].split(",")
    assert header == ["q", "mi_exact", "mi_plugin_mean"]


def test_mi_curve_rejects_non_binary(capsys):
    assert run(capsys, "mi-curve", "--p", "0.2,0.3,0.5", "--alpha", "1")[0] == 2


def test_risk(capsys, tmp_path):
    code, out = run(capsys, "risk", "--sample", "1,2,1,0", "--population", "1,5,3,2")
    assert code == 0
    d = json.loads(out)
    assert d["tau1"] == 1 and d["tau2"] == pytest.approx(4 / 3, abs=1e-15)
    assert run(capsys, "risk", "--sample", "2,1", "--population", "1,1")[0] == 2


def test_risk_from_csv(capsys, tmp_path):
    pop = tmp_path / "pop.csv"
    pop.write_text("town\nA\nB\nB\nC\nC\nC\n")
    smp = tmp_path / "smp.csv"
    smp.write_text("town\nA\nB\nC\nC\n")
    code, out = run(capsys, "risk", "--sample-file", str(smp), "--population-file", str(pop),
                    "--column", "town")
    assert code == 0
    d = json.loads(out)
    assert d["tau1"] == 1 and d["tau2"] == pytest.approx(1.5, abs=1e-15)


def test_scenario_outputs(tmp_path, capsys):
    argv = ["scenario", "--scenario", "I", "--alpha", "1,2", "--n", "2000", "--replications", "3",
            "--seed", "5"]
    code, out = run(capsys, *argv, "--out-dir", str(tmp_path / "a"))
    assert code == 0
    d = json.loads(out)
    assert [r["alpha"] for r in d["alphas"]] == [1.0, 2.0]
    assert all("dominance" in r for r in d["alphas"])
    run(capsys, *argv, "--out-dir", str(tmp_path / "b"), "--threads", "3")
    for name in ("summary.json", "estimates.csv", "means.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_scenario_with_population(capsys):
    code, out = run(capsys, "scenario", "--scenario", "I", "--alpha", "1", "--n", "500",
                    "--replications", "2", "--population", "2000")
    assert code == 0
    row = json.loads(out)["alphas"][0]
    assert row["mean_tau1"] <= row["mean_tau2"]


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("PRAM_FORGE_THREADS", "2")
    assert run(capsys, "optimize", "--p", "0.25,0.25,0.25,0.25", "--alpha", "0")[0] == 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pram_forge", "certify", "--q", "0.6,0.6", "--alpha", "0.5"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["pass"] is True


def test_usage_error_exit_code(capsys):
    assert main(["optimize", "--strategy", "bogus"]) == 2
