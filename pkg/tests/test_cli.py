import io
import json
from fractions import Fraction as F
from pathlib import Path

import pytest

from stokeslag.cli import (
    ParseError,
    derive_report,
    main,
    parse_matrix_text,
    parse_polynomial,
    parse_raw,
    parse_system,
    print_system,
)
from stokeslag.polymat import OneVarPolyMat, TwoVarPolyMat

ROOT = Path(__file__).resolve().parents[1]
SYSTEMS = sorted((ROOT / "systems").glob("*.json"))
FAILURES = ROOT / "tests" / "data" / "failures"


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


# ------------------------------------------------------------------ text parsing


def test_parse_polynomial():
    assert parse_polynomial("1 - 3/2*s^2") == {(0,): F(1), (2,): F(-3, 2)}
    assert parse_polynomial("3 + 3/20*z*e", ("z", "e")) == {(0, 0): F(3), (1, 1): F(3, 20)}
    assert parse_polynomial("-s") == {(1,): F(-1)}
    with pytest.raises(ParseError):
        parse_polynomial("2*x")


@pytest.mark.parametrize("path", SYSTEMS, ids=lambda p: p.stem)
def test_derive_strings_round_trip(path):
    sf = parse_system(str(path))
    rep = derive_report(sf)
    assert parse_matrix_text(rep["Q"]) == sf.system.S.T.reflect() @ sf.system.P
    lagr = sf.system.lagrange()
    assert parse_matrix_text(rep["H"], ("z", "e")) == lagr.H
    assert parse_matrix_text(rep["H0"], ("z", "e")) == lagr.H0
    if lagr.p:
        assert parse_matrix_text(rep["Pb"]) == lagr.Pb
        assert parse_matrix_text(rep["Sb"]) == lagr.Sb


def test_derive_rod_symplectic_values():
    code, text = run("derive", "--builtin", "rod_symplectic", "--format", "tree")
    assert code == 0
    rep = json.loads(text)
    assert rep["Q"] == "[[1 - s^2, 0], [0, 1]]"
    assert rep["Pb"] == "[[1, 0]]" and rep["Sb"] == "[[-s, 0]]"
    assert rep["H"] == "[[1 + z*e, 0], [0, 1]]"
    assert rep["maximal"] is True and rep["p"] == 1


# ------------------------------------------------------------------ files


@pytest.mark.parametrize("path", SYSTEMS, ids=lambda p: p.stem)
def test_system_files_round_trip(path, tmp_path):
    first = parse_system(str(path))
    copy = tmp_path / path.name
    copy.write_text(print_system(first))
    assert parse_system(str(copy)) == first
    assert print_system(parse_system(str(copy))) == print_system(first)


def test_float_matrix_entries_rejected():
    tree = json.loads((ROOT / "systems" / "closed_rod.json").read_text())
    tree["S"]["coeffs"][0][0][0] = 0.5
    with pytest.raises(ParseError):
        parse_raw(tree)


@pytest.mark.parametrize("path", SYSTEMS, ids=lambda p: p.stem)
def test_check_shipped_files(path):
    code, text = run("check", "--system", str(path))
    assert code == 0, text


# ------------------------------------------------------------------ exit codes


@pytest.mark.parametrize("name,argv,code", [
    ("bad_syntax.json", ["check"], 1),
    ("not_reciprocal.json", ["check"], 2),
    ("singular_mass.json", ["simulate"], 3),
    ("audit_tight_tol.json", ["simulate", "--tol", "1e-9"], 4),
])
def test_failure_corpus(name, argv, code, tmp_path):
    got, _ = run(*argv, "--system", str(FAILURES / name), "--out", str(tmp_path))
    assert got == code


def test_usage_errors():
    assert run("check", "--builtin", "rod_unknown")[0] == 1
    assert run("check")[0] == 1
    assert run("simulate", "--builtin", "rod_symplectic", "--param", "T=-1")[0] == 2


def test_not_reciprocal_message(capsys):
    code, text = run("check", "--system", str(FAILURES / "not_reciprocal.json"))
    assert code == 2 and "reciprocity         FAIL" in text
    code, _ = run("derive", "--system", str(FAILURES / "not_reciprocal.json"))
    assert code == 2
    assert "reciprocity residual nonzero at block (0,0)" in capsys.readouterr().err


def test_csv_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    args = ["simulate", "--builtin", "rod_symplectic", "--N", "40", "--dt", "0.0125", "--t-end", "0.25"]
    assert run(*args, "--out", str(a))[0] == 0
    assert run(*args, "--out", str(b))[0] == 0
    assert (a / "rod_symplectic.csv").read_bytes() == (b / "rod_symplectic.csv").read_bytes()
    header = (a / "rod_symplectic.csv").read_text().splitlines()[0]
    assert header.startswith("t,H,H0,dHdt,power_pairing,energy_pairing,residual,residual_H0")


def test_study_reports_orders():
    code, text = run("study", "--builtin", "rod_symplectic", "--N", "20", "--dt", "0.025", "--t-end", "0.1")
    assert code == 0
    assert "joint refinement orders" in text and text.count("N=") == 9
