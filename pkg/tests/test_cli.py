import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from killsens.cli import CHECK_COLUMNS, CSV_COLUMNS, fit_order, main

BM_BOUNDARY = 'model = "constant"\npayoff = "expm"\nx0 = 0.0\nT = 1.0\n'
DRIFT = '[model]\nname = "constant"\nb = 0.5\n\n[payoff]\nname = "expm"\n\n[run]\nx0 = 0.5\nT = 1.0\n'


def _cfg(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _numeric(rows):
    return [{k: v for k, v in r.items() if k != "seconds"} for r in rows]


def test_check_exits_zero(tmp_path):
    out = tmp_path / "chk"
    assert main(["check", "--out", str(out)]) == 0
    rows = _rows(out / "results.csv")
    assert tuple(rows[0]) == CHECK_COLUMNS
    assert rows and all(r["passed"] == "True" for r in rows)
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "check" and man["passed"] is True


def test_deriv_all_on_brownian_boundary(tmp_path):
    cfg = _cfg(tmp_path, BM_BOUNDARY)
    out = tmp_path / "d"
    code = main(["deriv", "--config", cfg, "--estimator", "all", "--paths", "40000", "--steps", "128",
                 "--out", str(out), "--assert"])
    assert code == 0
    rows = _rows(out / "results.csv")
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r["estimator"] for r in rows] == ["reflected", "mixed", "bel", "fd"]
    oracle = 2 * math.exp(0.5) * 0.5 * math.erfc(1 / math.sqrt(2))
    for r in rows:
        assert float(r["oracle"]) == pytest.approx(oracle, abs=1e-10)
        assert abs(float(r["mean"]) - oracle) <= 3 * float(r["stderr"]) + 0.02 * oracle


def test_manifest_rerun_is_bitwise(tmp_path):
    cfg = _cfg(tmp_path, DRIFT)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["compare", "--config", cfg, "--paths", "5000", "--steps", "32", "--out", str(a)]) == 0
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 0 and man["version"] and len(man["config_hash"]) == 64
    assert main(["compare", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert _numeric(_rows(a / "results.csv")) == _numeric(_rows(b / "results.csv"))
    rerun = json.loads((b / "manifest.json").read_text())["config"]
    assert {k: v for k, v in rerun.items() if k != "output"} == {k: v for k, v in man["config"].items() if k != "output"}


def test_compare_table(tmp_path):
    cfg = _cfg(tmp_path, DRIFT)
    out = tmp_path / "cmp"
    assert main(["compare", "--config", cfg, "--paths", "20000", "--steps", "64", "--out", str(out)]) == 0
    rows = _rows(out / "results.csv")
    assert [r["estimator"] for r in rows] == ["value", "reflected", "mixed", "bel", "fd"]
    for r in rows:
        z = float(r["z"])
        assert z == pytest.approx((float(r["mean"]) - float(r["oracle"])) / float(r["stderr"]), rel=1e-12)


def test_threads_strict_reproducible(tmp_path):
    cfg = _cfg(tmp_path, DRIFT + "chunk = 1000\n")
    outs = []
    for k, extra in enumerate(([], ["--threads", "3", "--strict"])):
        out = tmp_path / f"t{k}"
        assert main(["deriv", "--config", cfg, "--paths", "8000", "--steps", "16", "--out", str(out)] + extra) == 0
        outs.append(_numeric(_rows(out / "results.csv")))
    assert outs[0] == outs[1]


def test_oracle_command_pde(tmp_path):
    cfg = _cfg(tmp_path, '[model]\nname = "tanh-drift"\n[payoff]\nname = "expm"\n[run]\nx0 = 0.5\nT = 1.0\n'
                         '[oracle]\nkind = "auto"\npde_nx = 1000\npde_nt = 1000\n')
    out = tmp_path / "o"
    assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "results.csv")
    assert rows[0]["engine"] == "pde" and rows[1]["estimator"] == "oracle_deriv"
    assert float(rows[1]["mean"]) == pytest.approx(0.545161, abs=2e-5)


def test_convergence_reports_orders(tmp_path):
    cfg = _cfg(tmp_path, DRIFT + "paths = 4000\n[convergence]\nn = [8, 16, 32]\n")
    out = tmp_path / "conv"
    assert main(["convergence", "--config", cfg, "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    o = man["orders"]["value"]
    assert o["n"] == [8, 16, 32] and len(o["pairwise_order"]) == 2 and "fitted_order" in o


def test_fit_order():
    ns = np.array([64, 128, 256, 512])
    assert fit_order(ns, 3.0 / np.sqrt(ns)) == pytest.approx(0.5)
    assert fit_order(ns, -1.0 / ns) == pytest.approx(1.0)


def test_config_errors_exit_two(tmp_path, capsys):
    assert main(["value", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["value"]) == 2
    bad = _cfg(tmp_path, BM_BOUNDARY + "sigma_typo = 1\n")
    assert main(["value", "--config", bad]) == 2
    assert "sigma_typo" in capsys.readouterr().err
    below = _cfg(tmp_path, BM_BOUNDARY.replace("x0 = 0.0", "x0 = -1.0"), "below.toml")
    assert main(["value", "--config", below]) == 2


def test_gate_failure_exits_three(tmp_path):
    # a very wide finite-difference step has a large truncation bias
    cfg = _cfg(tmp_path, DRIFT.replace("x0 = 0.5", "x0 = 2.5") + "fd_h = 2.0\n")
    out = tmp_path / "g"
    args = ["deriv", "--config", cfg, "--estimator", "fd", "--paths", "20000", "--steps", "32", "--out", str(out)]
    assert main(args) == 0
    assert main(args + ["--assert"]) == 3


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "killsens", "check", "--out", str(tmp_path / "m")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "identities pass" in r.stdout
