import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from freeclt.cli import main, parse_complex, parse_grid, parse_ns
from freeclt.covariance import CovarianceModel, model_to_json, scalar_model
from freeclt.cumulant_engine import family_to_json, free_family
from freeclt.operator_space import matrix_to_json

BERNOULLI = [0, 1, 0, -1, 0, 2, 0, -5, 0, 14, 0, -42, 0, 132, 0, -429]


@pytest.fixture
def files(tmp_path):
    paths = {}

    def dump(name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        paths[name.split(".")[0]] = p

    dump("scalar_model.json", model_to_json(scalar_model()))
    block = CovarianceModel([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], np.eye(2))
    dump("block_model.json", model_to_json(block))
    dump("bernoulli.json", {"type": "bernoulli_sym"})
    dump("semicircle.json", {"type": "semicircle"})
    dump("block_family.json", family_to_json(
        free_family(block, [BERNOULLI, BERNOULLI], {"type": "constant", "L": 2.0})))
    paths["dir"] = tmp_path
    return paths


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("text, expected", [
    ("2i", 2j), ("1+2i", 1 + 2j), ("-0.5-1e-3i", -0.5 - 1e-3j), ("3", 3), ("i", 1j), ("1-i", 1 - 1j),
])
def test_parse_complex(text, expected):
    assert parse_complex(text) == expected


@pytest.mark.parametrize("text", ["", "abc", "2i+", "1e", "import os"])
def test_parse_complex_rejects(text):
    with pytest.raises(ValueError):
        parse_complex(text)


def test_parse_ns_and_grid():
    assert parse_ns("1,4,16") == [1, 4, 16]
    with pytest.raises(ValueError, match="increasing"):
        parse_ns("64,4")
    with pytest.raises(ValueError, match="positive"):
        parse_ns("0,1")
    assert parse_grid("-3:3:601").size == 601
    for bad in ("-3:3", "3:-3:10", "a:b:c", "0:1:1"):
        with pytest.raises(ValueError, match="grid"):
            parse_grid(bad)


def test_solve_scalar_point(files, capsys):
    code, out, _ = run(["solve", "--model", files["scalar_model"], "--points", "2i"], capsys)
    assert code == 0
    rows = json.loads(out)
    assert rows[0]["value"][0] == pytest.approx(0, abs=1e-12)
    assert rows[0]["value"][1] == pytest.approx(-0.41421356, abs=1e-8)
    assert rows[0]["residual"] <= 1e-12


def test_solve_real_point_is_input_error(files, capsys):
    code, _, err = run(["solve", "--model", files["scalar_model"], "--points", "1.0"], capsys)
    assert code == 1
    assert "upper half-plane" in err and "points[0]" in err


def test_solve_empty_points(files, capsys):
    code, out, _ = run(["solve", "--model", files["scalar_model"], "--points", ""], capsys)
    assert code == 0 and json.loads(out) == []


def test_solve_matrix_points_from_file(files, capsys):
    pts = files["dir"] / "points.json"
    pts.write_text(json.dumps(["3i", matrix_to_json(np.array([[2j, 0.5], [0.5, 3j]]))]))
    code, out, _ = run(["solve", "--model", files["block_model"], "--points", f"@{pts}"], capsys)
    assert code == 0
    rows = json.loads(out)
    assert [r["point_id"] for r in rows] == ["p000", "p001"]
    # block model decouples: G(3i I) = g_sc(3i) I with g_sc(3i) = -i (sqrt13 - 3) / 2
    g = complex(*rows[0]["G"][0][0])
    assert g == pytest.approx(-0.5j * (math.sqrt(13) - 3), abs=1e-10)
    assert rows[1]["residual"] <= 1e-12


def test_solve_non_convergence_exit(files, capsys):
    # a tolerance below round-off can never be met
    code, out, _ = run(["solve", "--model", files["scalar_model"], "--points", "0.5+1i",
                        "--tol", "1e-30"], capsys)
    assert code == 2
    assert "error" in json.loads(out)[0]


def test_solve_bad_model(files, capsys):
    bad = files["dir"] / "bad.json"
    bad.write_text(json.dumps({"N": 1, "d": 1, "coefficients": [[[[1, 0]]]]}))
    code, _, err = run(["solve", "--model", bad, "--points", "2i"], capsys)
    assert code == 1 and "sigma" in err
    code, _, err = run(["solve", "--model", files["dir"] / "missing.json", "--points", "2i"], capsys)
    assert code == 1 and "not found" in err


def test_rate_bernoulli(files, capsys):
    code, out, _ = run(["rate", "--family", files["bernoulli"], "--points", "3i", "--ns", "1,4,16,64"], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0].startswith("point_id,n,method,lhs_value")
    assert len(lines) == 5
    ratio_col = lines[0].split(",").index("ratio")
    assert all(float(l.split(",")[ratio_col]) <= 1 for l in lines[1:])


def test_rate_semicircle_rows_vanish(files, capsys):
    code, out, _ = run(["rate", "--family", files["semicircle"], "--points", "3i,1+2i", "--ns", "1,8"], capsys)
    assert code == 0
    col = out.split("\n")[0].split(",").index("lhs_value")
    assert all(float(l.split(",")[col]) <= 1e-14 for l in out.strip().split("\n")[1:])


def test_rate_rejects_decreasing_ns(files, capsys):
    code, _, err = run(["rate", "--family", files["bernoulli"], "--points", "3i", "--ns", "64,4"], capsys)
    assert code == 1 and "ns" in err


def test_rate_series_family(files, capsys):
    code, out, _ = run(["rate", "--family", files["block_family"], "--points", "3i", "--ns", "4,16,64"], capsys)
    assert code == 0
    assert out.count(",series,") == 3


def test_rate_bound_violation_exit(files, capsys, monkeypatch):
    import freeclt.cli as cli

    real = cli.run_sweep

    def inflated(*args, **kwargs):
        recs = real(*args, **kwargs)
        recs[0].lhs_value = 10 * recs[0].rhs
        return recs

    monkeypatch.setattr(cli, "run_sweep", inflated)
    code, _, err = run(["rate", "--family", files["bernoulli"], "--points", "3i", "--ns", "1"], capsys)
    assert code == 3 and "software bug" in err


def test_rate_output_is_byte_identical(files, capsys):
    out1, out2 = files["dir"] / "a.csv", files["dir"] / "b.csv"
    for out in (out1, out2):
        assert run(["rate", "--family", files["bernoulli"], "--points", "3i,1+2i", "--ns", "1,2,4",
                    "--out", out], capsys)[0] == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert b"\r" not in out1.read_bytes()


def test_density_semicircle(files, capsys):
    code, out, _ = run(["density", "--model", files["scalar_model"], "--grid=-3:3:601",
                        "--epsilon", "0.01"], capsys)
    assert code == 0
    rows = [l.split(",") for l in out.strip().split("\n")]
    assert rows[0] == ["x", "density"]
    values = {float(x): float(v) for x, v in rows[1:]}
    assert values[0.0] == pytest.approx(1 / math.pi, abs=0.01)


def test_density_outside_support(files, capsys):
    eps = 0.01
    code, out, _ = run(["density", "--model", files["block_model"], "--grid", "3:6:31",
                        "--epsilon", eps], capsys)
    assert code == 0
    assert all(float(l.split(",")[1]) <= 2 * eps / math.pi + 1e-3 for l in out.strip().split("\n")[1:])


def test_density_family_power(files, capsys):
    code, out, _ = run(["density", "--family", files["bernoulli"], "--ns", "2", "--grid=-1:1:3"], capsys)
    assert code == 0
    # arcsine density at 0 is 1 / (pi sqrt 2), smoothed slightly by epsilon
    assert float(out.strip().split("\n")[2].split(",")[1]) == pytest.approx(1 / (math.pi * math.sqrt(2)), abs=0.01)


@pytest.mark.parametrize("args", [["--epsilon", "0"], ["--epsilon", "-1"], ["--grid", "1:0:5"]])
def test_density_input_errors(args, capsys):
    assert run(["density", *args], capsys)[0] == 1


def test_verify_unknown_suite(capsys):
    code, _, err = run(["verify", "nope"], capsys)
    assert code == 1 and "suite" in err


def test_verify_rate_suite(capsys):
    code, out, _ = run(["verify", "rate"], capsys)
    assert code == 0
    assert out.count("[PASS]") == 4


def test_usage_errors_are_input_errors(capsys):
    assert run(["frobnicate"], capsys)[0] == 1
    assert run(["rate", "--order", "x"], capsys)[0] == 1
    assert run(["rate", "--order", "7", "--family", "f"], capsys)[0] == 1


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "freeclt", "solve", "--model", str(files["scalar_model"]),
                           "--points", "2i"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)[0]["point_id"] == "p000"


def test_data_files_ship_and_parse(capsys):
    data = Path(__file__).resolve().parent.parent / "data"
    code, out, _ = run(["rate", "--family", data / "block_bernoulli_family.json", "--points", "3i",
                        "--ns", "4,16,64"], capsys)
    assert code == 0 and out.count(",series,") == 3
