import json
import subprocess
import sys


from kmcauchy.cli import main
from kmcauchy.mesh import load_mesh, validate


def test_mesh_parabola(tmp_path, capsys):
    out = tmp_path / "dom.mesh"
    assert main(["mesh", "--parabola", "--depth", "0.5", "--h", "0.05", "--out", str(out)]) == 0
    validate(load_mesh(out))
    assert "vertices 321" in capsys.readouterr().out


def test_mesh_bad_depth(tmp_path):
    assert main(["mesh", "--depth", "-1", "--out", str(tmp_path / "x.mesh")]) == 2


def test_mesh_square_counts(tmp_path, capsys):
    assert main(["mesh", "--square", "--h", "0.25", "--s-side", "top", "--out", str(tmp_path / "sq.mesh")]) == 0
    out = capsys.readouterr().out
    # 5 x 5 nodes, 2 * 4 * 4 triangles, 4 * 4 boundary edges
    assert "vertices 25 triangles 32 boundary-edges 16" in out


def test_mesh_square_full_boundary_is_usage_error(tmp_path):
    args = ["mesh", "--square", "--h", "0.5", "--s-side", "top,bottom,left,right", "--out", str(tmp_path / "m")]
    assert main(args) == 2


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["run", "--algorithm", "tikhonov"]) == 2
    assert main(["run", "--lambda", "1.0", "--out-dir", str(tmp_path)]) == 2
    assert main(["run", "--mesh", str(tmp_path / "missing.mesh"), "--out-dir", str(tmp_path)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path)]) == 2


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--h", "0.1", "--out-dir", str(out), *extra])
    return code, out


def test_run_writes_outputs(tmp_path, capsys):
    code, out = _run(tmp_path, "r", "--algorithm", "km", "--p", "1", "--seed", "7")
    assert code == 0
    text = capsys.readouterr().out
    assert "stopped at iteration" in text and "final discrepancy" in text
    assert sorted(p.name for p in out.iterdir()) == ["history_km.csv", "manifest.json", "trace_km.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 7 and manifest["config"]["h"] == 0.1
    assert "version" in manifest and "wall_clock_seconds" in manifest


def test_run_is_deterministic(tmp_path):
    _run(tmp_path, "a", "--algorithm", "cg-h12")
    _run(tmp_path, "b", "--algorithm", "cg-h12")
    for name in ("history_cg_h12.csv", "trace_cg_h12.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_exact_data_monotone(tmp_path):
    code, out = _run(tmp_path, "e", "--algorithm", "cg-l2", "--p", "0", "--max-iter", "40")
    assert code == 0
    rows = (out / "history_cg_l2.csv").read_text().splitlines()[1:]
    res = [float(r.split(",")[2]) for r in rows]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res, res[1:]))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["metrics"]["status"] in ("cap", "stagnation", "stopped-by-discrepancy")


def test_run_from_manifest_and_mesh(tmp_path):
    code, out = _run(tmp_path, "first", "--algorithm", "cg-l2")
    mesh = tmp_path / "dom.mesh"
    assert main(["mesh", "--h", "0.1", "--out", str(mesh)]) == 0
    again = tmp_path / "second"
    assert main(["run", "--config", str(out / "manifest.json"), "--mesh", str(mesh), "--out-dir", str(again)]) == 0
    assert (out / "history_cg_l2.csv").read_bytes() == (again / "history_cg_l2.csv").read_bytes()


def test_run_square_geometry(tmp_path):
    assert main(["run", "--square", "--h", "0.1", "--algorithm", "cg-h12", "--out-dir", str(tmp_path)]) == 0


def test_compare(tmp_path, capsys):
    assert main(["compare", "--h", "0.1", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["history_cg_h12.csv", "history_cg_l2.csv", "history_km.csv", "manifest.json", "trace_b.csv"]
    assert str(tmp_path / "trace_b.csv") in out
    rows = {line.split(",")[0]: line.split(",") for line in out.splitlines() if line.count(",") == 5}
    assert int(rows["cg-h12"][1]) <= int(rows["km"][1])


def test_verify_default(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out


def test_verify_loose_tolerance_still_runs(capsys):
    code = main(["verify", "--tol", "1e-4", "--check", "adjointness"])
    assert code in (0, 1)
    assert "adjointness" in capsys.readouterr().out


def test_verify_unknown_check():
    assert main(["verify", "--check", "bogus"]) == 2


def test_verify_list(capsys):
    assert main(["verify", "--list"]) == 0
    assert "sigma-shift-corrected" in capsys.readouterr().out


def test_numerical_failure_exit_code(tmp_path):
    assert main(["run", "--h", "0.1", "--tol", "1e-300", "--out-dir", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kmcauchy", "verify", "--check", "nope"], capture_output=True)
    assert proc.returncode == 2
