"""
Detection losses over grid tensors: pose, confidence, class, GIoU and
their weighted total, with gradients with respect to the prediction.

"L2" terms are summed squared differences. Ground-truth occupancy comes
from the gt confidence channel; every normalizer counts gt cells.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .box_geometry import OrientedBox3D, giou_3d
from .config import DetLossWeights
from .detection_codec import CLASS_OFFSET, CONF, POSE, TargetTensor, decode_pose
from .errors import ParameterError
from .numerics import finite_diff_gradient

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
GIOU_FD_EPS = 1e-6


def _check_pair(pred: TargetTensor, gt: TargetTensor) -> None:
    if pred.grid.shape != gt.grid.shape:
        raise ParameterError(f"prediction {pred.grid.shape} and target {gt.grid.shape} shapes differ")


def loss_pose_and_grad(pred: TargetTensor, gt: TargetTensor, eps: float) -> tuple[float, np.ndarray]:
    _check_pair(pred, gt)
    occ = gt.occupied()
    norm = occ.sum() + eps
    diff = (pred.grid[..., POSE] - gt.grid[..., POSE]) * occ[..., None]
    grad = np.zeros_like(pred.grid)
    grad[..., POSE] = 2.0 * diff / norm
    return float(np.sum(diff * diff) / norm), grad


def loss_pose(pred: TargetTensor, gt: TargetTensor, eps: float) -> float:
    return loss_pose_and_grad(pred, gt, eps)[0]


def loss_conf_and_grad(pred: TargetTensor, gt: TargetTensor, eps: float) -> tuple[float, np.ndarray]:
    """Positive and negative cells are normalized by their own counts."""
    _check_pair(pred, gt)
    occ = gt.occupied()
    n_true = occ.sum()
    n_false = occ.size - n_true
    diff = pred.grid[..., CONF] - gt.grid[..., CONF]
    scale = np.where(occ, 1.0 / (n_true + eps), 1.0 / (n_false + eps))
    grad = np.zeros_like(pred.grid)
    grad[..., CONF] = 2.0 * diff * scale
    return float(np.sum(diff * diff * scale)), grad


def loss_conf(pred: TargetTensor, gt: TargetTensor, eps: float) -> float:
    return loss_conf_and_grad(pred, gt, eps)[0]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_class_and_grad(pred: TargetTensor, gt: TargetTensor) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over gt cells; log-probabilities floored at ln(1e-12)."""
    _check_pair(pred, gt)
    occ = gt.occupied()
    grad = np.zeros_like(pred.grid)
    n = int(occ.sum())
    if n == 0:
        return 0.0, grad
    logits = pred.grid[occ][:, CLASS_OFFSET:]
    target = gt.grid[occ][:, CLASS_OFFSET:]
    log_p = _log_softmax(logits)
    floor = np.log(LOG_FLOOR)
    active = log_p > floor
    value = -np.sum(target * np.maximum(log_p, floor)) / n
    # floored entries are constant in the logits
    w = target * active
    probs = np.exp(log_p)
    cell_grad = (probs * w.sum(axis=-1, keepdims=True) - w) / n
    block = grad[..., CLASS_OFFSET:]
    block[occ] = cell_grad
    return float(value), grad


def loss_class(pred: TargetTensor, gt: TargetTensor) -> float:
    return loss_class_and_grad(pred, gt)[0]


def loss_giou(
    pred_boxes_by_cell: Sequence[OrientedBox3D],
    gt_boxes_by_cell: Sequence[OrientedBox3D],
) -> float:
    """Mean of (GIoU - 1)^2 over paired boxes of the occupied cells."""
    if len(pred_boxes_by_cell) != len(gt_boxes_by_cell):
        raise ParameterError(
            f"{len(pred_boxes_by_cell)} predicted boxes for {len(gt_boxes_by_cell)} ground-truth boxes"
        )
    if not gt_boxes_by_cell:
        return 0.0
    terms = [(giou_3d(p, g) - 1.0) ** 2 for p, g in zip(pred_boxes_by_cell, gt_boxes_by_cell)]
    return float(sum(terms) / len(terms))


def cell_box_pairs(pred: TargetTensor, gt: TargetTensor) -> tuple[list[OrientedBox3D], list[OrientedBox3D]]:
    """Decoded (pred, gt) boxes for every gt-occupied cell, row-major."""
    _check_pair(pred, gt)
    cells = list(zip(*np.nonzero(gt.occupied())))
    preds = [decode_pose(pred.grid[c][POSE]) for c in cells]
    gts = [decode_pose(gt.grid[c][POSE]) for c in cells]
    return preds, gts


def loss_giou_tensor_and_grad(pred: TargetTensor, gt: TargetTensor) -> tuple[float, np.ndarray]:
    """
    GIoU term on tensors. The gradient is taken by central differences over
    each cell's 8 pose channels; at clipping degeneracies it is whatever
    the difference quotient gives.
    """
    _check_pair(pred, gt)
    cells = list(zip(*np.nonzero(gt.occupied())))
    grad = np.zeros_like(pred.grid)
    if not cells:
        return 0.0, grad
    n = len(cells)
    total = 0.0
    for c in cells:
        gt_box = decode_pose(gt.grid[c][POSE])

        def term(pose: np.ndarray, gt_box=gt_box) -> float:
            return (giou_3d(decode_pose(pose), gt_box) - 1.0) ** 2 / n

        pose = pred.grid[c][POSE]
        total += term(pose)
        grad[c][POSE] = finite_diff_gradient(term, pose, eps=GIOU_FD_EPS)
    return float(total), grad


@dataclass(frozen=True)
class DetLossReport:
    conf: float
    pose: float
    classification: float
    giou: float
    total: float
    gradient: np.ndarray  # same layout as the prediction grid


def loss_detection_total(pred: TargetTensor, gt: TargetTensor, weights: DetLossWeights) -> DetLossReport:
    """
    lambda_conf * conf + lambda_pose * pose + lambda_class * class + lambda_giou * giou.
    The GIoU block of the gradient is numeric and only computed when its weight is non-zero.
    """
    conf, g_conf = loss_conf_and_grad(pred, gt, weights.epsilon)
    pose, g_pose = loss_pose_and_grad(pred, gt, weights.epsilon)
    cls, g_cls = loss_class_and_grad(pred, gt)
    if weights.lambda_giou > 0.0:
        giou, g_giou = loss_giou_tensor_and_grad(pred, gt)
    else:
        giou, g_giou = loss_giou(*cell_box_pairs(pred, gt)), np.zeros_like(pred.grid)

    total = (
        weights.lambda_conf * conf
        + weights.lambda_pose * pose
        + weights.lambda_class * cls
        + weights.lambda_giou * giou
    )
    gradient = (
        weights.lambda_conf * g_conf
        + weights.lambda_pose * g_pose
        + weights.lambda_class * g_cls
        + weights.lambda_giou * g_giou
    )
    logger.debug(f"detection loss conf={conf:.6g} pose={pose:.6g} class={cls:.6g} giou={giou:.6g}")
    return DetLossReport(conf=conf, pose=pose, classification=cls, giou=giou, total=float(total), gradient=gradient)
