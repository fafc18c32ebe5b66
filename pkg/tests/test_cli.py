import json
from pathlib import Path

import numpy as np
import pytest

from vr3dense.cli import main
from vr3dense.config import RoiConfig
from vr3dense.kitti_io import parse_label_line, write_point_cloud
from vr3dense.voxel_grid import in_roi_mask, read_grid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def scene_dir(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path)]) == 0
    return tmp_path


def _stdout_lines(capsys) -> list[str]:
    return capsys.readouterr().out.splitlines()


def test_header_lines_and_determinism(scene_dir, capsys):
    capsys.readouterr()
    argv = ["eval-depth", "--pred", str(scene_dir / "depth.pgm"), "--gt", str(scene_dir / "sparse.pgm")]
    assert main(argv) == 0
    first = _stdout_lines(capsys)
    assert main(argv) == 0
    second = _stdout_lines(capsys)
    assert first[0].startswith("config-sha256 ") and len(first[0].split()[1]) == 64
    assert first[1] == "seed 0"
    assert first[:3] == second[:3]


def test_override_changes_hash(scene_dir, capsys):
    capsys.readouterr()
    argv = ["eval-depth", "--pred", str(scene_dir / "depth.pgm"), "--gt", str(scene_dir / "sparse.pgm")]
    main(argv)
    default = _stdout_lines(capsys)[0]
    main(argv + ["--seed", "7"])
    seeded = _stdout_lines(capsys)
    assert seeded[0] != default
    assert seeded[1] == "seed 7"


def test_eval_depth_perfect(scene_dir, tmp_path):
    out = tmp_path / "metrics.json"
    argv = ["eval-depth", "--pred", str(scene_dir / "depth.pgm"), "--gt", str(scene_dir / "sparse.pgm"), "--out", str(out)]
    assert main(argv) == 0
    metrics = json.loads(out.read_text())
    assert metrics["abs_rel"] == 0.0
    assert metrics["delta1"] == 1.0
    assert metrics["count"] == 128


def test_voxelize_conserves_points(tmp_path, rng):
    roi = RoiConfig()
    points = np.hstack([rng.uniform([-5, -30, -4], [75, 30, 2], size=(2000, 3)), rng.uniform(size=(2000, 1))])
    points = points.astype(np.float32)
    scan = tmp_path / "000000.bin"
    scan.write_bytes(write_point_cloud(points))
    out = tmp_path / "grid.vxg"
    assert main(["voxelize", "--scan", str(scan), "--out", str(out)]) == 0
    grid = read_grid(out.read_bytes())
    assert grid.total == int(in_roi_mask(points, roi).sum())


def test_voxelize_many_scans_with_workers(tmp_path, rng):
    scans = []
    for i in range(3):
        path = tmp_path / f"{i:06d}.bin"
        path.write_bytes(write_point_cloud(rng.uniform(0, 20, size=(100, 4)).astype(np.float32)))
        scans.append(str(path))
    out_dir = tmp_path / "grids"
    assert main(["voxelize", "--scan", *scans, "--out", str(out_dir), "--workers", "2"]) == 0
    assert sorted(p.name for p in out_dir.iterdir()) == ["000000.vxg", "000001.vxg", "000002.vxg"]


def test_encode_then_decode_labels(tmp_path, calib_text):
    calib = tmp_path / "calib.txt"
    calib.write_text(calib_text)
    labels = tmp_path / "labels.txt"
    labels.write_text(
        "Car 0.00 0 0.00 0 0 10 10 1.50 1.80 4.20 20.00 3.00 -1.50 0.40\n"
        "DontCare -1 -1 -10 0 0 0 0 -1 -1 -1 -1000 -1000 -1000 -10\n"
    )
    tensor = tmp_path / "targets.vrt"
    decoded = tmp_path / "decoded.txt"
    assert main(["encode-targets", "--labels", str(labels), "--calib", str(calib), "--out", str(tensor)]) == 0
    assert main(["decode", "--pred", str(tensor), "--calib", str(calib), "--out", str(decoded)]) == 0
    lines = decoded.read_text().splitlines()
    assert len(lines) == 1
    label = parse_label_line(lines[0], with_score=True)
    assert label.class_name == "Car"
    assert label.location == pytest.approx((20.0, 3.0, -1.5), abs=0.01)
    assert label.rotation_y == pytest.approx(0.4, abs=0.01)
    assert label.score == 1.0


def test_eval_detection_perfect(tmp_path, calib_text):
    calib = tmp_path / "calib.txt"
    calib.write_text(calib_text)
    gt = tmp_path / "gt.txt"
    gt.write_text("Car 0.00 0 0.00 0 0 10 10 1.50 1.80 4.20 20.00 3.00 -1.50 0.40\n")
    det = tmp_path / "det.txt"
    det.write_text("Car 0.00 0 0.00 0 0 10 10 1.50 1.80 4.20 20.00 3.00 -1.50 0.40 0.9\n")
    out = tmp_path / "ap.json"
    argv = ["eval-detection", "--det", str(det), "--gt", str(gt), "--calib", str(calib), "--out", str(out)]
    assert main(argv) == 0
    report = json.loads(out.read_text())
    assert report["ap40_Car@0.7"] == pytest.approx(1.0)
    assert report["map40@0.5"] == pytest.approx(1.0)


def test_losses_report(scene_dir, tmp_path):
    out = tmp_path / "losses.txt"
    argv = [
        "losses",
        "--left", str(scene_dir / "left.ppm"),
        "--right", str(scene_dir / "right.ppm"),
        "--calib", str(scene_dir / "calib.txt"),
        "--depth-l", str(scene_dir / "depth.pgm"),
        "--depth-r", str(scene_dir / "depth.pgm"),
        "--sparse", str(scene_dir / "sparse.pgm"),
        "--out", str(out),
    ]
    assert main(argv) == 0
    keys = [line.split(":")[0] for line in out.read_text().splitlines()]
    assert keys[:5] == ["depth_eps", "depth_reprojection", "depth_consistency", "depth_appearance", "depth_total"]
    assert "depth_sup" in keys


def test_fit_depth_writes_trace(scene_dir, tmp_path):
    out = tmp_path / "fit.pgm"
    trace = tmp_path / "trace.csv"
    argv = [
        "fit-depth",
        "--config", str(CONFIGS / "toy_scene.json"),
        "--left", str(scene_dir / "left.ppm"),
        "--right", str(scene_dir / "right.ppm"),
        "--calib", str(scene_dir / "calib.txt"),
        "--init-depth", "12",
        "--steps", "3",
        "--out", str(out),
        "--trace", str(trace),
    ]
    assert main(argv) == 0
    rows = trace.read_text().splitlines()
    assert rows[0] == "step,loss"
    assert [r.split(",")[0] for r in rows[1:]] == ["0", "1", "2", "3"]
    assert out.read_bytes().startswith(b"P5")


def test_gradcheck_subcommand(capsys):
    assert main(["gradcheck", "--inputs", "2", "--probes", "3", "--case", "smooth", "--case", "consistency"]) == 0
    assert "consistency" in capsys.readouterr().out


class TestErrors:
    def test_missing_file(self, tmp_path, capsys):
        assert main(["voxelize", "--scan", str(tmp_path / "absent.bin"), "--out", str(tmp_path / "g.vxg")]) == 1
        assert capsys.readouterr().err.startswith("vr3dense-error: io: ")

    def test_format_error(self, tmp_path, capsys):
        scan = tmp_path / "bad.bin"
        scan.write_bytes(b"\x00" * 17)
        assert main(["voxelize", "--scan", str(scan), "--out", str(tmp_path / "g.vxg")]) == 1
        assert capsys.readouterr().err.startswith("vr3dense-error: format: ")

    def test_bad_config_key(self, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text('{"not_a_key": 1}')
        assert main(["synth", "--out-dir", str(tmp_path), "--config", str(config)]) == 1
        assert capsys.readouterr().err.startswith("vr3dense-error: config: ")

    def test_unknown_subcommand(self, capsys):
        assert main(["teleport"]) == 2
        assert capsys.readouterr().err.startswith("vr3dense-error: usage: ")

    def test_bad_override(self, tmp_path, capsys):
        assert main(["synth", "--out-dir", str(tmp_path), "--set", "nms_iou"]) == 2
        assert "usage" in capsys.readouterr().err
