import json

import numpy as np
import pytest

from korn_lab.cli import main


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_whitney_report(tmp_path):
    code, out = run(tmp_path, "whitney", "--domain", "unit_square", "--max-level", "4")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["pass"] and rep["checks"]
    assert (out / "summary.txt").read_text().startswith("korn-lab whitney")
    assert list((out / "data").glob("*.csv"))
    assert (out / "figures").is_dir() and list((out / "figures").glob("*.png"))


def test_deterministic_given_seed(tmp_path):
    a = run(tmp_path, "cusp", "--no-plots", name="a")[1]
    b = run(tmp_path, "cusp", "--no-plots", name="b")[1]
    for f in ["report.json", "summary.txt"] + [p.relative_to(a).as_posix() for p in (a / "data").glob("*")]:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_json_domain_file(tmp_path):
    spec = tmp_path / "dom.json"
    spec.write_text(json.dumps({"type": "l_shape", "n": 2, "scale": 1.0}))
    code, out = run(tmp_path, "tree", "--domain", str(spec), "--max-level", "4", "--no-plots")
    assert code == 0
    assert json.loads((out / "report.json").read_text())["results"]["K"] > 0


def test_kernel_and_decompose(tmp_path):
    assert run(tmp_path, "kernel", name="k")[0] == 0
    code, out = run(tmp_path, "decompose", "--domain", "l_shape3", "--max-level", "4", "--fields", "1",
                    "--no-plots", name="d")
    assert code == 0
    assert json.loads((out / "report.json").read_text())["pass"]


def test_decompose_supplied_field(tmp_path):
    bad = tmp_path / "field.npy"
    np.save(bad, np.zeros((3, 3, 3)))
    code, _ = run(tmp_path, "decompose", "--domain", "l_shape3", "--max-level", "4", "--field", str(bad),
                  "--no-plots")
    assert code == 2


def test_bad_domain_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "whitney", "--domain", "no_such_domain")
    assert code == 2
    assert "[geometry]" in capsys.readouterr().err
    code, _ = run(tmp_path, "cusp", "--eps", "0")
    assert code == 2
    assert "[cusp]" in capsys.readouterr().err


def test_degenerate_cusp_exponent(tmp_path, capsys):
    # s = -1 gives the constant field: handled, but not a counterexample
    code, out = run(tmp_path, "cusp", "--s", "-1", "--no-plots")
    assert code == 1
    assert "admissible_exponent" in capsys.readouterr().err
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["exponents"]["lhs_diverges"] is False


def test_audit_failure_exit_code(tmp_path, capsys):
    # the coarse pair h = 1/4, 1/8 is far from mesh converged
    code, out = run(tmp_path, "korn", "--mesh", "4,8", "--no-plots")
    assert code == 1
    assert "cauchy_beta0" in capsys.readouterr().err
    rep = json.loads((out / "report.json").read_text())
    assert not rep["pass"]
