import math

import numpy as np
import pytest

from vr3dense.box_geometry import OrientedBox3D
from vr3dense.config import DetLossWeights
from vr3dense.detection_codec import CLASS_OFFSET, CONF, TargetTensor, encode_targets
from vr3dense.detection_losses import (
    cell_box_pairs,
    loss_class,
    loss_class_and_grad,
    loss_conf,
    loss_detection_total,
    loss_giou,
    loss_giou_tensor_and_grad,
    loss_pose,
    loss_pose_and_grad,
)
from vr3dense.errors import ParameterError
from vr3dense.numerics import finite_diff_gradient

EPS = 1e-6
CUBE = OrientedBox3D(center=(35.0, 0.0, 0.0), size=(1.0, 1.0, 1.0), yaw=0.0)


@pytest.fixture
def gt(roi) -> TargetTensor:
    return encode_targets([(CUBE, 0)], roi, 3)


def _copy(t: TargetTensor) -> TargetTensor:
    return TargetTensor(t.grid.copy(), t.class_count)


class TestPose:
    def test_perfect(self, gt):
        assert loss_pose(gt, gt, EPS) == 0.0

    def test_no_objects(self):
        empty = TargetTensor.zeros(3)
        pred = TargetTensor(np.ones_like(empty.grid), 3)
        assert loss_pose(pred, empty, EPS) == 0.0

    def test_one_channel_off(self, gt):
        pred = _copy(gt)
        pred.grid[8, 8, 2] += 0.5
        assert loss_pose(pred, gt, EPS) == pytest.approx(0.25 / (1 + EPS), rel=1e-12)

    def test_shape_mismatch(self, gt):
        with pytest.raises(ParameterError):
            loss_pose(TargetTensor.zeros(3, 8), gt, EPS)


class TestConf:
    def test_perfect(self, gt):
        assert loss_conf(gt, gt, EPS) == 0.0

    def test_occupied_cell_half(self, gt):
        pred = _copy(gt)
        pred.grid[8, 8, CONF] = 0.5
        assert loss_conf(pred, gt, EPS) == pytest.approx(0.25 / (1 + EPS), rel=1e-12)

    def test_negative_group_normalization(self):
        gt = TargetTensor.zeros(3)
        pred = _copy(gt)
        pred.grid[3, 4, CONF] = 1.0
        assert loss_conf(pred, gt, EPS) == pytest.approx(1.0 / (256 + EPS), rel=1e-12)


class TestClass:
    def test_uniform_logits(self, gt):
        assert loss_class(TargetTensor(_zero_logits(gt), 3), gt) == pytest.approx(math.log(3))

    def test_confident_logits_approach_zero(self, gt):
        pred = _copy(gt)
        pred.grid[8, 8, CLASS_OFFSET:] = [50.0, 0.0, 0.0]
        assert loss_class(pred, gt) < 1e-20

    def test_no_objects(self):
        empty = TargetTensor.zeros(3)
        assert loss_class(empty, empty) == 0.0

    def test_floored_entries_have_no_gradient(self, gt):
        pred = _copy(gt)
        pred.grid[8, 8, CLASS_OFFSET:] = [-100.0, 0.0, 0.0]
        value, grad = loss_class_and_grad(pred, gt)
        assert value == pytest.approx(-math.log(1e-12))
        assert not grad.any()

    def test_gradient_matches_differences(self, gt, rng):
        pred = _copy(gt)
        pred.grid[8, 8, CLASS_OFFSET:] = rng.normal(size=3)
        _, grad = loss_class_and_grad(pred, gt)

        def f(v):
            return loss_class(TargetTensor(v.reshape(pred.grid.shape), 3), gt)

        indices = [np.ravel_multi_index((8, 8, CLASS_OFFSET + k), pred.grid.shape) for k in range(3)]
        numeric = finite_diff_gradient(f, pred.grid, indices=indices)
        np.testing.assert_allclose(grad.ravel()[indices], numeric[indices], atol=1e-7)


def _zero_logits(gt: TargetTensor) -> np.ndarray:
    grid = gt.grid.copy()
    grid[..., CLASS_OFFSET:] = 0.0
    return grid


class TestGiou:
    def test_perfect(self, gt):
        assert loss_giou(*cell_box_pairs(gt, gt)) == pytest.approx(0.0, abs=1e-24)

    def test_perfect_rotated(self, roi):
        box = OrientedBox3D(center=(35.0, 0.0, 0.0), size=(4.0, 1.8, 1.5), yaw=0.7)
        rotated = encode_targets([(box, 0)], roi, 3)
        assert loss_giou(*cell_box_pairs(rotated, rotated)) == pytest.approx(0.0, abs=1e-20)
        assert loss_giou_tensor_and_grad(rotated, rotated)[0] == pytest.approx(0.0, abs=1e-20)
        report = loss_detection_total(rotated, rotated, DetLossWeights())
        assert report.total == pytest.approx(report.classification)

    def test_half_shift(self, gt):
        pred = _copy(gt)
        pred.grid[8, 8, 1] += 0.5
        assert loss_giou(*cell_box_pairs(pred, gt)) == pytest.approx(4.0 / 9.0)
        value, _ = loss_giou_tensor_and_grad(pred, gt)
        assert value == pytest.approx(4.0 / 9.0)

    def test_no_objects(self):
        empty = TargetTensor.zeros(3)
        assert loss_giou_tensor_and_grad(empty, empty)[0] == 0.0

    def test_list_length_mismatch(self):
        with pytest.raises(ParameterError):
            loss_giou([CUBE], [])


class TestTotal:
    def test_perfect(self, gt):
        report = loss_detection_total(gt, gt, DetLossWeights())
        assert report.conf == 0.0 and report.pose == 0.0
        assert report.giou == pytest.approx(0.0, abs=1e-12)
        assert report.total == pytest.approx(report.classification)
        np.testing.assert_allclose(report.gradient[..., : CLASS_OFFSET], 0.0, atol=1e-6)

    def test_selector(self, gt):
        pred = _copy(gt)
        pred.grid[8, 8, CONF] = 0.5
        pred.grid[8, 8, 1] += 0.5
        weights = DetLossWeights(lambda_conf=1.0, lambda_pose=0.0, lambda_class=0.0, lambda_giou=0.0)
        report = loss_detection_total(pred, gt, weights)
        assert report.total == pytest.approx(loss_conf(pred, gt, EPS))

    def test_additivity(self, gt):
        pred = _copy(gt)
        pred.grid[8, 8, CONF] = 0.5
        pred.grid[8, 8, 1] += 0.5
        report = loss_detection_total(pred, gt, DetLossWeights())
        assert report.conf == pytest.approx(0.25 / (1 + EPS))
        assert report.pose == pytest.approx(0.25 / (1 + EPS))
        assert report.giou == pytest.approx(4.0 / 9.0)
        assert report.total == pytest.approx(report.conf + report.pose + report.classification + report.giou)

    def test_pose_gradient_is_analytic(self, gt):
        pred = _copy(gt)
        pred.grid[8, 8, 2] += 0.5
        _, grad = loss_pose_and_grad(pred, gt, EPS)
        assert grad[8, 8, 2] == pytest.approx(1.0 / (1 + EPS))
