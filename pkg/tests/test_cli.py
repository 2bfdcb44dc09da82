import json
import shutil
import subprocess
from fractions import Fraction

import pytest

from meshsep.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, main
from meshsep.meshio import read_mesh, write_mesh
from meshsep.mesh import build_mesh, certify_no_intersections
from meshsep.proximity import exhaustive_min_separation
from meshsep.rounding import is_binary64
from conftest import D, TETRA_POINTS, TETRA_TRIS, parallel_triangles

DQ = Fraction(D)


@pytest.fixture
def planted(tmp_path):
    p = tmp_path / "in.xmesh"
    assert main(["gen", "planted-pairs", str(p), "-k", "4", "--size", "300", "--seed", "1"]) == EXIT_OK
    return p


def test_gen_deterministic_with_truth(tmp_path):
    a, b = tmp_path / "a.xmesh", tmp_path / "b.xmesh"
    for p in (a, b):
        assert main(["gen", "planted-pairs", str(p), "-k", "10", "--seed", "1"]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    truth = json.loads((tmp_path / "a.xmesh.truth.json").read_text())
    assert truth["count"] == 10 and len(truth["pairs"]) == 10
    assert {"vertex", "triangle"} <= set(truth["pairs"][0])


def test_gen_bad_kind(tmp_path, capsys):
    assert main(["gen", "blob", str(tmp_path / "x.xmesh")]) == EXIT_USAGE
    assert "invalid choice" in capsys.readouterr().err


def test_separate_planted(tmp_path, planted, capsys):
    out = tmp_path / "out.xmesh"
    rep = tmp_path / "rep.json"
    code = main(["separate", str(planted), str(out), "-d", "1e-6", "--report", str(rep)])
    assert code == EXIT_OK
    row = json.loads(capsys.readouterr().out)
    assert row["c_e"] == 4
    full = json.loads(rep.read_text())
    assert full["separated"] and full["delta"] > D
    m = read_mesh(out)
    assert exhaustive_min_separation(m) > DQ * DQ
    assert main(["check", str(out)]) == EXIT_OK


def test_separate_already_separated(tmp_path, capsys):
    p = tmp_path / "t.off"
    write_mesh(build_mesh(TETRA_POINTS, TETRA_TRIS), p)
    assert main(["separate", str(p), str(tmp_path / "o.off")]) == EXIT_OK
    row = json.loads(capsys.readouterr().out)
    assert all(row[k] == 0 for k in ("v_m", "m_m", "v_e", "m_e"))
    assert (tmp_path / "o.off").read_text() == p.read_text()


@pytest.mark.parametrize("d", ["0", "-1e-6", "nan", "abc"])
def test_bad_d(tmp_path, d):
    assert main(["separate", "in.off", "out.off", "-d", d]) == EXIT_USAGE


def test_missing_input(tmp_path, capsys):
    assert main(["separate", str(tmp_path / "nope.off"), str(tmp_path / "o.off")]) == EXIT_FAIL
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError"


def test_round_high_precision_to_ply(tmp_path, capsys):
    src = tmp_path / "hp.xmesh"
    assert main(["gen", "high-precision", str(src), "--size", "300", "-k", "3", "--seed", "2"]) == EXIT_OK
    out = tmp_path / "out.ply"
    assert main(["round", str(src), str(out)]) == EXIT_OK
    m = read_mesh(out)
    assert is_binary64(m) and certify_no_intersections(m)


def test_round_clean_input_byte_stable(tmp_path):
    p = tmp_path / "t.ply"
    write_mesh(build_mesh(TETRA_POINTS, TETRA_TRIS), p, binary=True)
    assert main(["round", str(p), str(tmp_path / "o.ply"), "--binary"]) == EXIT_OK
    assert (tmp_path / "o.ply").read_bytes() == p.read_bytes()


def test_round_d_below_budget(tmp_path, capsys):
    p = tmp_path / "t.off"
    write_mesh(build_mesh(TETRA_POINTS, TETRA_TRIS), p)
    assert main(["round", str(p), str(tmp_path / "o.off"), "-d", "1e-17"]) == EXIT_USAGE
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"


def test_optimize_off_by_default():
    from meshsep.cli import build_parser
    args = build_parser().parse_args(["round", "a.off", "b.off"])
    assert args.optimize is False
    assert build_parser().parse_args(["round", "a.off", "b.off", "--optimize"]).optimize


def test_check_clean(tmp_path, capsys):
    p = tmp_path / "t.off"
    write_mesh(build_mesh(TETRA_POINTS, TETRA_TRIS), p)
    assert main(["check", str(p)]) == EXIT_OK
    f = json.loads(capsys.readouterr().out)
    assert f["close"] == [] and f["intersecting"] == []


def test_check_close_pair(tmp_path, capsys):
    p = tmp_path / "p.xmesh"
    write_mesh(parallel_triangles(DQ / 2, shift=(Fraction(1, 8), Fraction(1, 8))), p)
    assert main(["check", str(p)]) == EXIT_VIOLATION
    f = json.loads(capsys.readouterr().out)
    vt = [c for c in f["close"] if c["a"]["kind"] == "vertex"]
    assert vt and all(Fraction(c["dist2"]) == DQ * DQ / 4 for c in vt)
    assert {tuple(c["a"]["ids"]) for c in vt} == {(3,)}
    assert f["intersections"] == 0


def test_check_intersection(tmp_path, capsys):
    p = tmp_path / "x.off"
    p.write_text("OFF\n6 2 0\n0 0 0\n2 0 0\n0 2 0\n0.5 0.5 -1\n0.5 0.5 1\n1.5 0.5 0\n"
                 "3 0 1 2\n3 3 4 5\n")
    assert main(["check", str(p)]) == EXIT_VIOLATION
    assert json.loads(capsys.readouterr().out)["intersecting"] == [[0, 1]]


def test_annotate_dump_and_figures(tmp_path, planted):
    ann, lp, fig = tmp_path / "ann.obj", tmp_path / "lp", tmp_path / "fig"
    code = main(["separate", str(planted), str(tmp_path / "o.xmesh"), "--annotate", str(ann),
                 "--dump-lp", str(lp), "--figures", str(fig), "--format", "table"])
    assert code == EXIT_OK
    assert ann.exists()
    dumps = sorted(lp.iterdir())
    assert dumps and dumps[0].read_text().startswith("\\ ")
    assert {p.suffix for p in fig.iterdir()} == {".png"}


@pytest.mark.skipif(shutil.which("meshsep") is None, reason="console script not installed")
def test_console_script(tmp_path):
    r = subprocess.run(["meshsep", "check", "/nonexistent.off"], capture_output=True, text=True)
    assert r.returncode == EXIT_FAIL
    r = subprocess.run(["meshsep", "--bogus"], capture_output=True, text=True)
    assert r.returncode == EXIT_USAGE
