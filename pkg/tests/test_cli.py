import numpy as np
import pytest

from llg_imex.cli import main
from llg_imex.config import ConfigError, load_config, parse_config_text
from llg_imex.diagnostics import CSV_COLUMNS, DiagnosticsSeries
from llg_imex.experiments import mumag5_scales
from llg_imex.mesh import build_box_mesh, save_mesh
from llg_imex.output import read_csv, read_vtk_vectors, write_csv, write_vtk

SMALL_CUBE = """
# tiny cube run
nx = 2
ny = 2
nz = 2
k = 0.005   # step
T = 0.02
snapshot_times = 0, 0.01, 0.02
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_config_text():
    cfg = parse_config_text("a = 1\n# comment\n\nb = x, y  # trailing\n")
    assert cfg == {"a": "1", "b": "x, y"}
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("a = 1\nnot a pair\n")
    with pytest.raises(ConfigError, match="invalid key"):
        parse_config_text("two words = 3")


def test_load_config_layers(tmp_path):
    path = _write(tmp_path, "k = 0.002\nstrategy = mp\n")
    cfg = load_config("cube", path, {"strategy": "ee", "out": None})
    assert cfg.float("k") == 0.002
    assert cfg.str("strategy") == "ee"
    assert cfg.int("nx") == 8 and cfg.floats("applied_field", 3) == [-2.0, -0.5, 0.0]
    assert cfg.bool("stray") is True
    with pytest.raises(ConfigError):
        load_config("nope")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("cube", tmp_path / "missing.cfg")
    bad = load_config("cube", None, {"k": "fast"})
    with pytest.raises(ConfigError, match="not a number"):
        bad.float("k")
    with pytest.raises(ConfigError, match="needs 3"):
        load_config("cube", None, {"m0": "1,0"}).floats("m0", 3)
    with pytest.raises(ConfigError, match="missing"):
        cfg.str("no_such_key")


def test_csv_header_and_round_trip(tmp_path, rng):
    s = DiagnosticsSeries()
    vals = rng.standard_normal((4, len(CSV_COLUMNS))) * 10.0 ** rng.integers(-12, 12, (4, 1))
    for i, row in enumerate(vals):
        rec = dict(zip(CSV_COLUMNS, row))
        rec["t"] = float(i)
        rec["step"] = i
        s.append(rec)
    path = write_csv(s, tmp_path / "d.csv")
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_csv(path)
    for j, c in enumerate(CSV_COLUMNS):
        expected = [r[c] for r in s.records]
        assert np.array_equal(back[c], expected)


def test_vtk_format(tmp_path, rng):
    mesh = build_box_mesh(2, 1, 1)
    m = rng.standard_normal((mesh.n_nodes, 3))
    path = write_vtk(mesh, m, tmp_path / "m.vtk")
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII" and lines[3] == "DATASET UNSTRUCTURED_GRID"
    text = path.read_text()
    assert f"CELL_TYPES {mesh.n_elements}" in text and "VECTORS m double" in text
    pts, tets, m_back = read_vtk_vectors(path)
    assert np.array_equal(pts, mesh.vertices)
    assert np.array_equal(tets, mesh.tets)
    assert np.array_equal(m_back, m)
    types = text.split(f"CELL_TYPES {mesh.n_elements}\n")[1].split("POINT_DATA")[0].split()
    assert set(types) == {"10"}
    with pytest.raises(ValueError):
        write_vtk(mesh, m[:-1], tmp_path / "bad.vtk")


def test_cube_run_outputs(tmp_path, capsys):
    out = tmp_path / "cube"
    code = main(["cube", "--config", _write(tmp_path, SMALL_CUBE), "--out", str(out),
                 "--strategy", "mp"])
    assert code == 0
    printed = capsys.readouterr().out
    assert "mean_sweeps" in printed
    assert (out / "config.resolved").exists()
    resolved = parse_config_text((out / "config.resolved").read_text())
    assert resolved["strategy"] == "mp" and resolved["alpha"] == "1.0"
    for i in (0, 2, 4):
        assert (out / f"m_{i:06d}.vtk").exists()
    data = read_csv(out / "diagnostics.csv")
    assert len(data["t"]) == 5
    assert np.max(data["norm_dev_max"]) <= 1e-12
    assert (out / "summary.txt").read_text().startswith("experiment = cube")


def test_rerun_is_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL_CUBE)
    assert main(["cube", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["cube", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a, b = read_csv(tmp_path / "a" / "diagnostics.csv"), read_csv(tmp_path / "b" / "diagnostics.csv")
    for c in CSV_COLUMNS:
        if not c.startswith("wtime"):
            assert np.array_equal(a[c], b[c]), c


def test_exit_codes(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL_CUBE)
    out = str(tmp_path / "x")
    assert main(["cube", "--config", cfg, "--out", out, "--k", "-1"]) == 2
    assert main(["bogus"]) == 2
    assert main(["cube", "--strategy", "rk4"]) == 2
    assert main(["cube", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert main(["cube", "--config", cfg, "--out", out, "--k", "0.003"]) == 2
    bad_axis = _write(tmp_path, "nx = 1\nny = 1\nnz = 1\nanisotropy_axis = 1,1,0\n", "a.cfg")
    assert main(["custom", "--config", bad_axis, "--out", out]) == 2
    missing_mesh = _write(tmp_path, f"mesh_file = {tmp_path / 'none.mesh'}\n", "m.cfg")
    assert main(["custom", "--config", missing_mesh, "--out", out]) == 2
    # midpoint stray re-evaluation cannot converge in a single sweep
    failing = _write(tmp_path, SMALL_CUBE + "max_sweeps = 1\n", "f.cfg")
    assert main(["cube", "--config", failing, "--strategy", "mp", "--out", out]) == 3
    err = capsys.readouterr().err
    assert "numerical failure" in err and "step 0" in err


def test_custom_with_mesh_file(tmp_path):
    mesh = build_box_mesh(2, 2, 1, (0, 0, 0), (1, 1, 0.5))
    save_mesh(mesh, tmp_path / "film.mesh")
    text = (f"mesh_file = {tmp_path / 'film.mesh'}\nk = 0.002\nT = 0.01\n"
            "anisotropy_axis = 0,0,1\nzl_velocity = 1,0,0\napplied_field = 0,0.5,0\nm0 = 0,0,1\n")
    assert main(["custom", "--config", _write(tmp_path, text), "--out", str(tmp_path / "c")]) == 0
    data = read_csv(tmp_path / "c" / "diagnostics.csv")
    assert len(data["step"]) == 6 and np.max(data["norm_dev_max"]) <= 1e-12


def test_convergence_rejects_non_nesting(tmp_path):
    text = "nx = 1\nny = 1\nnz = 1\nk_list = 0.0004,0.0006\nk_ref = 0.0002\nT = 0.0024\n"
    assert main(["convergence", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2
    text = "nx = 1\nny = 1\nnz = 1\nk_list = 0.0004,0.0008\nk_ref = 0.00015\nT = 0.0024\n"
    assert main(["convergence", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2


def test_convergence_small(tmp_path):
    text = ("nx = 1\nny = 1\nnz = 1\nk_list = 0.02,0.04\nk_ref = 0.005\nT = 0.4\n"
            "strategies = ab,ee\n")
    out = tmp_path / "conv"
    assert main(["convergence", "--config", _write(tmp_path, text), "--out", str(out)]) == 0
    lines = (out / "errors.csv").read_text().splitlines()
    assert lines[0] == "strategy,k,error,mean_sweeps" and len(lines) == 5
    summary = (out / "summary.txt").read_text()
    assert "order_ab" in summary and "order_ee" in summary


def test_mumag5_scales():
    c_ex, v, t_unit = mumag5_scales(load_config("mumag5"))
    assert c_ex == pytest.approx(32.33, rel=1e-3)
    assert np.allclose(v, [0.4082, 0, 0], rtol=1e-3)
    assert t_unit == pytest.approx(5.656e-12, rel=1e-3)
    # the 0.005 ps step of the reference run in these units
    assert 0.005e-12 / t_unit == pytest.approx(8.84e-4, rel=1e-3)


def test_mumag5_tiny_run(tmp_path):
    text = "nx = 4\nny = 4\nnz = 1\nrelax_T = 2\nT_ns = 0.002\nk = 0.1\n"
    out = tmp_path / "mm"
    assert main(["mumag5", "--config", _write(tmp_path, text), "--out", str(out)]) == 0
    data = read_csv(out / "mumag5.csv")
    assert list(data) == ["t_ns", "mx_avg", "my_avg", "mz_avg"]
    # the run length is rounded to whole steps of 0.1 time units
    assert abs(data["t_ns"][-1] - 0.002) <= 0.5 * 0.1 * 5.657e-3
    assert (out / "relaxed.vtk").exists() and (out / "relax_diagnostics.csv").exists()
