import math

import numpy as np
import pytest

from vr3dense.box_geometry import (
    OrientedBox3D,
    ProjectedPoints,
    box_corners,
    camera_to_lidar,
    enclosing_volume,
    giou_3d,
    iou_3d,
    iou_bev,
    label_to_lidar_box,
    lidar_box_to_label,
    lidar_to_camera,
    polygon_area,
    polygon_clip,
    project_camera_points,
    project_points,
    sparse_depth_map,
    wrap_angle,
)
from vr3dense.errors import CalibrationError
from vr3dense.kitti_io import Calibration, ObjectLabel, parse_calib
from vr3dense.synthetic import random_overlapping_pair

UNIT = (1.0, 1.0, 1.0)


def _cube(x: float, yaw: float = 0.0) -> OrientedBox3D:
    return OrientedBox3D(center=(x, 0.0, 0.0), size=UNIT, yaw=yaw)


def _inside(points: np.ndarray, box: OrientedBox3D) -> np.ndarray:
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    d = points - np.array(box.center)
    local_x = c * d[:, 0] + s * d[:, 1]
    local_y = -s * d[:, 0] + c * d[:, 1]
    half = np.array(box.size) / 2.0
    return (np.abs(local_x) <= half[0]) & (np.abs(local_y) <= half[1]) & (np.abs(d[:, 2]) <= half[2])


def monte_carlo_overlap(a: OrientedBox3D, b: OrientedBox3D, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """(IoU, GIoU) from stratified sampling of the joint bounding box, one jittered sample per cell."""
    corners = np.vstack([box_corners(a), box_corners(b)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    per_axis = int(round(n ** (1.0 / 3.0)))
    grid = np.stack(np.meshgrid(*[np.arange(per_axis)] * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    points = lo + (grid + rng.uniform(size=grid.shape)) / per_axis * (hi - lo)
    in_a, in_b = _inside(points, a), _inside(points, b)
    cell = float(np.prod(hi - lo)) / len(points)
    inter = np.sum(in_a & in_b) * cell
    union = np.sum(in_a | in_b) * cell
    enclosing = enclosing_volume(a, b)
    return inter / union, inter / union - (enclosing - union) / enclosing


class TestCorners:
    def test_axis_aligned_unit_cube(self):
        corners = box_corners(_cube(0.0))
        assert sorted(map(tuple, corners)) == sorted(
            (sx * 0.5, sy * 0.5, sz * 0.5) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)
        )

    def test_quarter_turn_swaps_extents(self):
        box = OrientedBox3D(center=(0.0, 0.0, 0.0), size=(4.0, 2.0, 1.0), yaw=math.pi / 2)
        corners = box_corners(box)
        np.testing.assert_allclose(np.ptp(corners, axis=0), [2.0, 4.0, 1.0], atol=1e-12)

    def test_half_turn_same_corner_set(self):
        box0 = OrientedBox3D(center=(1.0, 2.0, 0.0), size=(4.0, 2.0, 1.5), yaw=0.0)
        box_pi = OrientedBox3D(center=(1.0, 2.0, 0.0), size=(4.0, 2.0, 1.5), yaw=math.pi)
        a = np.round(box_corners(box0), 9).tolist()
        b = np.round(box_corners(box_pi), 9).tolist()
        assert sorted(map(tuple, a)) == sorted(map(tuple, b))

    def test_bottom_face_counter_clockwise(self):
        poly = box_corners(OrientedBox3D((0.0, 0.0, 0.0), (3.0, 2.0, 1.0), 0.4))[:4, :2]
        x, y = poly[:, 0], poly[:, 1]
        signed = 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        assert signed == pytest.approx(6.0)


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(-math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(0.25) == pytest.approx(0.25)


def test_polygon_clip_square_overlap():
    a = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    b = a + 1.0
    assert polygon_area(polygon_clip(a, b)) == pytest.approx(1.0)


class TestIou:
    def test_identical(self):
        box = OrientedBox3D((3.0, -1.0, 0.2), (4.0, 1.8, 1.5), 0.7)
        assert iou_3d(box, box) == pytest.approx(1.0)
        assert iou_bev(box, box) == pytest.approx(1.0)
        assert giou_3d(box, box) == pytest.approx(1.0)

    def test_disjoint(self):
        assert iou_3d(_cube(0.0), _cube(10.0)) == 0.0

    def test_half_shift(self):
        assert iou_3d(_cube(0.0), _cube(0.5)) == pytest.approx(1.0 / 3.0)
        assert giou_3d(_cube(0.0), _cube(0.5)) == pytest.approx(1.0 / 3.0)

    def test_giou_far_apart(self):
        assert giou_3d(_cube(0.0), _cube(10.0)) == pytest.approx(-9.0 / 11.0)

    def test_vertical_separation(self):
        a = OrientedBox3D((0.0, 0.0, 0.0), UNIT, 0.0)
        b = OrientedBox3D((0.0, 0.0, 2.0), UNIT, 0.0)
        assert iou_bev(a, b) == pytest.approx(1.0)
        assert iou_3d(a, b) == 0.0

    def test_rotated_half_shift_matches_monte_carlo(self, rng):
        a, b = _cube(0.0, 0.3), _cube(0.5, 0.3)
        iou, giou = monte_carlo_overlap(a, b, 1_000_000, rng)
        assert iou_3d(a, b) == pytest.approx(iou, abs=2e-3)
        assert giou_3d(a, b) == pytest.approx(giou, abs=2e-3)
        assert giou_3d(a, b) < iou_3d(a, b)

    @pytest.mark.parametrize("yaw", [0.0, 0.3, 0.7, math.pi / 4, 1.2, -2.5, math.pi])
    def test_self_overlap_at_any_heading(self, yaw):
        box = OrientedBox3D((10.0, 2.0, -0.5), (4.2, 1.7, 1.5), yaw)
        assert giou_3d(box, box) == pytest.approx(1.0, abs=1e-12)
        assert enclosing_volume(box, box) == pytest.approx(box.volume)

    @pytest.mark.slow
    def test_random_pairs_match_monte_carlo(self, roi, rng):
        for _ in range(200):
            a, b = random_overlapping_pair(rng, roi)
            iou, giou = monte_carlo_overlap(a, b, 1_000_000, rng)
            assert iou_3d(a, b) == pytest.approx(iou, abs=2e-3)
            assert giou_3d(a, b) == pytest.approx(giou, abs=2e-3)

    def test_symmetry_and_bounds(self, roi, rng):
        for _ in range(50):
            a, b = random_overlapping_pair(rng, roi)
            iou = iou_3d(a, b)
            giou = giou_3d(a, b)
            assert 0.0 <= iou <= 1.0
            assert iou == pytest.approx(iou_3d(b, a), abs=1e-9)
            assert giou == pytest.approx(giou_3d(b, a), abs=1e-9)
            assert -1.0 <= giou <= iou + 1e-12
            assert giou_3d(a, a) == pytest.approx(1.0, abs=1e-9)
            assert giou_3d(b, b) == pytest.approx(1.0, abs=1e-9)

    def test_full_turn_invariance(self, roi, rng):
        for _ in range(20):
            a, b = random_overlapping_pair(rng, roi)
            turned = OrientedBox3D(a.center, a.size, a.yaw + 2.0 * math.pi)
            assert iou_3d(turned, b) == pytest.approx(iou_3d(a, b), abs=1e-9)
            assert giou_3d(turned, b) == pytest.approx(giou_3d(a, b), abs=1e-9)


class TestFrames:
    def test_identity_calib_keeps_coordinates(self, identity_calib):
        p = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(lidar_to_camera(p, identity_calib), p)
        np.testing.assert_allclose(camera_to_lidar(p, identity_calib), p)

    def test_translation(self, calib_text):
        text = calib_text.replace("Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0", "Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 -0.1")
        calib = parse_calib(text)
        np.testing.assert_allclose(lidar_to_camera([1.0, 2.0, 3.0], calib), [1.0, 2.0, 2.9])

    def test_singular_transform(self, identity_calib):
        singular = Calibration(
            P2=identity_calib.P2,
            R0_rect=np.eye(3),
            Tr_velo_to_cam=np.zeros((3, 4)),
            focal=100.0,
            baseline=0.54,
        )
        with pytest.raises(CalibrationError):
            camera_to_lidar([0.0, 0.0, 1.0], singular)


class TestProjection:
    def test_pinhole(self, identity_calib):
        projected = project_camera_points(
            np.array([[0.0, 0.0, 10.0], [1.0, 0.0, 10.0], [0.0, 0.0, -5.0]]), identity_calib, (100, 100)
        )
        assert [(p.u, p.v, p.depth) for p in projected] == [
            pytest.approx((50.0, 50.0, 10.0)),
            pytest.approx((60.0, 50.0, 10.0)),
        ]

    def test_nearest_depth_wins_per_pixel(self, identity_calib):
        cam = np.array([[0.0, 0.0, 20.0], [0.0, 0.0, 10.0], [0.001, 0.0, 10.5]])
        projected = project_points(np.hstack([cam, np.zeros((3, 1))]), identity_calib, (100, 100))
        assert len(projected) == 1
        assert projected.depth[0] == 10.0

    def test_out_of_image_dropped(self, identity_calib):
        projected = project_points([[100.0, 0.0, 10.0, 0.0]], identity_calib, (100, 100))
        assert len(projected) == 0

    def test_sparse_map(self):
        projected = ProjectedPoints(u=np.array([1.5]), v=np.array([0.2]), depth=np.array([7.0]))
        depth = sparse_depth_map(projected, (2, 3))
        assert depth[0, 1] == 7.0
        assert depth.sum() == 7.0


class TestLabels:
    def _label(self, rotation_y: float = 0.0) -> ObjectLabel:
        return ObjectLabel(
            class_name="Car",
            truncated=0.0,
            occluded=0,
            alpha=0.0,
            bbox2d=(0.0, 0.0, 0.0, 0.0),
            dimensions=(2.0, 2.0, 4.0),
            location=(0.0, 0.0, 10.0),
            rotation_y=rotation_y,
        )

    def test_identity_calib_box(self, identity_calib):
        box = label_to_lidar_box(self._label(), identity_calib)
        assert box.size == (4.0, 2.0, 2.0)
        assert box.center[:2] == pytest.approx((0.0, 0.0))
        assert box.center[2] == pytest.approx(11.0)

    def test_yaw_convention(self, identity_calib):
        assert label_to_lidar_box(self._label(-math.pi / 2), identity_calib).yaw == pytest.approx(0.0)

    def test_round_trip(self, identity_calib):
        box = OrientedBox3D((12.0, -3.0, 0.4), (4.2, 1.7, 1.5), 0.8)
        again = label_to_lidar_box(lidar_box_to_label(box, identity_calib, "Car"), identity_calib)
        np.testing.assert_allclose(again.center, box.center, atol=1e-9)
        np.testing.assert_allclose(again.size, box.size, atol=1e-12)
        assert again.yaw == pytest.approx(box.yaw, abs=1e-9)
