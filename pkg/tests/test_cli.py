"""Command-line surface: stdout formats and exit codes."""

import numpy as np
import pytest
import trimesh

from app import emit_summary, main
from core.errors import SolverError
from utils.field_store import FieldStore
from utils.point_cloud_io import PointCloudReader

from .conftest import circle_cloud, sphere_cloud, write_xyzn


def _summary(text):
    return dict(pair.split('=', 1) for pair in text.strip().split())


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cloud_path = write_xyzn(root / "circle.xyzn", circle_cloud(60))
    prefix = root / "circle"
    code = main(["reconstruct", str(cloud_path), "-o", str(prefix), "--resolution", "20", "--k", "80",
                 "--log-level", "WARNING"])
    assert code == 0
    return root, cloud_path, prefix


def test_reconstruct_summary(workspace, capsys, tmp_path):
    _, cloud_path, _ = workspace
    code = main(["reconstruct", str(cloud_path), "-o", str(tmp_path / "again"), "--resolution", "20", "--k", "80",
                 "--binary", "--log-level", "WARNING"])
    assert code == 0
    summary = _summary(capsys.readouterr().out)
    assert summary['k'] == '80'
    assert float(summary['total_uncertainty']) > 0.0
    assert (tmp_path / "again.mean.grid.bin").is_file()
    assert (tmp_path / "again.C.bin").is_file()


def test_k_is_capped_by_grid(tmp_path, capsys):
    cloud_path = write_xyzn(tmp_path / "sphere.xyzn", sphere_cloud(50))
    code = main(["reconstruct", str(cloud_path), "-o", str(tmp_path / "tiny"), "--resolution", "4",
                 "--log-level", "ERROR"])
    assert code == 0
    assert _summary(capsys.readouterr().out)['k'] == '63'


def test_query_csv_on_stdout(workspace, capsys):
    root, _, prefix = workspace
    points = root / "points.csv"
    points.write_text("x,y\n0.5,0.5\n5.0,5.0\n")
    capsys.readouterr()
    assert main(["query", str(prefix), str(points), "--log-level", "ERROR"]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert len(lines) == 3
    assert lines[0] == "x,y,value"
    assert 0.5 < float(lines[1].split(',')[2]) <= 1.0
    assert lines[2] == "5.0,5.0,"
    assert _summary(captured.err.splitlines()[-1]) == {'outside_points': '1'}


def test_query_interval_to_file(workspace, capsys, tmp_path):
    root, _, prefix = workspace
    points = root / "points.csv"
    points.write_text("0.5,0.5\n0.2,0.5\n")
    output = tmp_path / "ci.csv"
    capsys.readouterr()
    assert main(["query", str(prefix), str(points), "--what", "ci95", "-o", str(output), "--log-level", "ERROR"]) == 0
    assert _summary(capsys.readouterr().out) == {'outside_points': '0'}
    header, first = output.read_text().splitlines()[:2]
    assert header == "x,y,value,lo,hi"
    _, _, value, lo, hi = (float(v) for v in first.split(','))
    assert lo <= value <= hi


def test_collide_line(workspace, capsys):
    _, _, prefix = workspace
    capsys.readouterr()
    code = main(["collide", str(prefix), "--box", "0.45,0.45,0.55,0.55", "--mc-samples", "2000",
                 "--region-samples", "8", "--log-level", "ERROR"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("p_collision=")
    summary = _summary(out)
    assert 0.0 <= float(summary['p_collision']) <= 1.0
    assert float(summary['stderr']) >= 0.0


def test_collide_along_trajectory(workspace, capsys):
    root, _, prefix = workspace
    path = root / "trajectory.csv"
    path.write_text("region,x,y\n0,0.18,0.5\n0,0.18,0.52\n1,0.5,0.5\n1,0.52,0.5\n")
    capsys.readouterr()
    code = main(["collide", str(prefix), "--trajectory", str(path), "--mc-samples", "2000", "--log-level", "ERROR"])
    assert code == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0] == "region,p_collision,stderr"
    assert len(lines) == 3
    summary = _summary(captured.err.splitlines()[-1])
    assert summary["regions"] == "2"
    assert 0.0 <= float(summary["p_any"]) <= 1.0


def test_collide_needs_region(workspace):
    _, _, prefix = workspace
    assert main(["collide", str(prefix), "--log-level", "ERROR"]) == 1


def test_levelset_obj(workspace, tmp_path):
    _, _, prefix = workspace
    output = tmp_path / "contour.obj"
    assert main(["levelset", str(prefix), "-o", str(output), "--log-level", "ERROR"]) == 0
    records = output.read_text().splitlines()
    assert any(r.startswith("l ") for r in records)
    assert any(r.startswith("v ") for r in records)


def test_repair_writes_cloud(workspace, tmp_path):
    _, cloud_path, prefix = workspace
    output = tmp_path / "repaired.xyzn"
    code = main(["repair", str(prefix), str(cloud_path), "-o", str(output), "--n-points", "10", "--steps", "20",
                 "--log-level", "ERROR"])
    assert code == 0
    repaired = PointCloudReader().read_cloud(output)
    assert len(repaired) == 10
    assert np.all(FieldStore().load(str(prefix)).grid.contains(repaired.positions))


def test_scan_merges_cameras(tmp_path, capsys):
    mesh_path = tmp_path / "sphere.obj"
    trimesh.creation.icosphere(subdivisions=2, radius=1.0).export(str(mesh_path))
    cameras = tmp_path / "cams.csv"
    cameras.write_text("px,py,pz,dx,dy,dz,half_angle\n0,0,3,0,0,-1,0.3\n0,0,-3,0,0,1,0.3\n")
    output = tmp_path / "scan.ply"
    code = main(["scan", str(mesh_path), "--cameras", str(cameras), "--rays", "40", "-o", str(output),
                 "--log-level", "ERROR"])
    assert code == 0
    assert _summary(capsys.readouterr().out)['scanned_points'] == '80'
    assert len(PointCloudReader().read_cloud(output)) == 80


def test_scan_until_uncertainty(tmp_path, capsys):
    mesh = trimesh.creation.icosphere(subdivisions=2, radius=0.3)
    mesh.apply_translation([0.5, 0.5, 0.5])
    mesh_path = tmp_path / "ball.obj"
    mesh.export(str(mesh_path))
    cameras = tmp_path / "cams.csv"
    cameras.write_text("px,py,pz,dx,dy,dz,half_angle\n0.5,0.5,1.5,0,0,-1,0.25\n0.5,0.5,-0.5,0,0,1,0.25\n")
    output = tmp_path / "scan.xyzn"
    code = main(["scan", str(mesh_path), "--cameras", str(cameras), "--rays", "30", "-o", str(output),
                 "--until-uncertainty", "1e9", "--resolution", "8", "--k", "20", "--log-level", "ERROR"])
    assert code == 0
    summary = _summary(capsys.readouterr().out)
    assert summary["scans"] == "1"
    assert summary["cameras"] == "0"
    assert summary["converged"] == "true"
    assert len(PointCloudReader().read_cloud(output)) == 30


def test_next_view_scores(workspace, capsys, tmp_path):
    _, cloud_path, prefix = workspace
    cameras = tmp_path / "cams.csv"
    cameras.write_text("px,py,dx,dy,half_angle\n0.5,0.12,0,1,0.3\n0.5,0.12,0,-1,0.3\n")
    capsys.readouterr()
    code = main(["next-view", str(prefix), str(cloud_path), "--cameras", str(cameras), "--repeats", "2",
                 "--threads", "2", "--log-level", "ERROR"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "camera_id,score"
    assert len(lines) == 3
    assert float(lines[2].split(',')[1]) == 0.0


@pytest.mark.parametrize("content", ["", "# comments only\n"])
def test_empty_cloud_is_input_error(tmp_path, content):
    path = tmp_path / "empty.xyzn"
    path.write_text(content)
    assert main(["reconstruct", str(path), "-o", str(tmp_path / "e"), "--log-level", "ERROR"]) == 2


def test_missing_input_and_field(tmp_path):
    assert main(["reconstruct", str(tmp_path / "absent.xyzn"), "--log-level", "ERROR"]) == 2
    points = tmp_path / "p.csv"
    points.write_text("0.5,0.5\n")
    assert main(["query", str(tmp_path / "absent"), str(points), "--log-level", "ERROR"]) == 2


def test_invalid_k_is_usage_error(workspace, tmp_path):
    _, cloud_path, _ = workspace
    assert main(["reconstruct", str(cloud_path), "-o", str(tmp_path / "k"), "--k", "0", "--log-level", "ERROR"]) == 1


def test_solver_failure_exit_code(workspace, tmp_path, monkeypatch):
    _, cloud_path, _ = workspace

    def _fail(*args, **kwargs):
        raise SolverError("Poisson solve did not converge", 1e-3, 5)

    monkeypatch.setattr("core.reconstruction.solve_mean", _fail)
    assert main(["reconstruct", str(cloud_path), "-o", str(tmp_path / "s"), "--resolution", "8", "--k", "10",
                 "--log-level", "ERROR"]) == 3


@pytest.mark.parametrize("argv", [[], ["reconstruct"], ["query", "prefix", "points.csv", "--what", "median"]])
def test_usage_errors_exit_with_one(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 1


def test_emit_summary_format(capsys):
    emit_summary({'p_collision': 0.25, 'stderr': 1e-3, 'k': 10})
    assert capsys.readouterr().out == "p_collision=0.25 stderr=0.001 k=10\n"
    emit_summary({})
    assert capsys.readouterr().out == ""
