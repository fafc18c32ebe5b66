"""
Depth metrics on sparse LiDAR samples and 40-recall-point average precision.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Mapping, Sequence

import numpy as np
import numpy.typing as npt

from .box_geometry import OrientedBox3D, ProjectedPoints, iou_3d
from .detection_codec import Detection
from .errors import EvaluationError, ParameterError

logger = logging.getLogger(__name__)

RECALL_POINTS = 40
PRED_DEPTH_FLOOR = 0.1
DEFAULT_DEPTH_RANGE = (0.0, 80.0)


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    count: int = 0

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def depth_samples_from_map(sparse_depth: npt.ArrayLike) -> ProjectedPoints:
    """Non-zero pixels of a sparse depth map as samples at pixel centers, row-major."""
    depth = np.asarray(sparse_depth, dtype=np.float64)
    rows, cols = np.nonzero(depth > 0)
    return ProjectedPoints(u=cols + 0.5, v=rows + 0.5, depth=depth[rows, cols])


def depth_metrics(
    pred: npt.ArrayLike,
    gt: ProjectedPoints,
    depth_range: tuple[float, float] = DEFAULT_DEPTH_RANGE,
) -> DepthMetrics:
    """
    Standard depth metrics over the samples whose gt lies in `depth_range`.
    Predictions are read at (floor(v), floor(u)) and clamped to [0.1, max].
    """
    lo, hi = depth_range
    if not hi > lo:
        raise ParameterError(f"depth range must have max > min, got {depth_range}")
    pred_map = np.asarray(pred, dtype=np.float64)
    h, w = pred_map.shape
    rows, cols = gt.rows, gt.cols
    valid = (gt.depth >= lo) & (gt.depth <= hi) & (gt.depth > 0)
    valid &= (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    if not valid.any():
        raise EvaluationError(f"no ground-truth depth samples inside {depth_range} m")

    g = gt.depth[valid]
    p = np.clip(pred_map[rows[valid], cols[valid]], PRED_DEPTH_FLOOR, hi)
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    metrics = DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff * diff / g)),
        rmse=float(math.sqrt(np.mean(diff * diff))),
        rmse_log=float(math.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        count=int(g.size),
    )
    logger.debug(f"depth metrics over {g.size} samples: {metrics}")
    return metrics


@dataclass(frozen=True)
class PrCurve:
    recall: np.ndarray  # k / 40, k = 1..40
    precision: np.ndarray  # right-interpolated precision at each recall point
    ap: float
    n_gt: int
    n_det: int


Frame = tuple[Sequence[Detection], Sequence[OrientedBox3D]]


def match_detections(frames: Sequence[Frame], iou_threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Rank detections of all frames by confidence (stable on frame, then input
    order) and match each to the unmatched gt of its own frame with the
    highest IoU >= threshold. Returns (is_tp flags in rank order, confidences).
    """
    ranked = [
        (-det.confidence, f, i, det)
        for f, (dets, _) in enumerate(frames)
        for i, det in enumerate(dets)
    ]
    ranked.sort(key=lambda item: item[:3])
    taken = [np.zeros(len(gts), dtype=bool) for _, gts in frames]
    is_tp = np.zeros(len(ranked), dtype=bool)
    for rank, (_, f, _, det) in enumerate(ranked):
        gts = frames[f][1]
        best, best_iou = -1, iou_threshold
        for j, gt in enumerate(gts):
            if taken[f][j]:
                continue
            iou = iou_3d(det.box, gt)
            if iou >= best_iou and (best < 0 or iou > best_iou):
                best, best_iou = j, iou
        if best >= 0:
            taken[f][best] = True
            is_tp[rank] = True
    confidences = np.array([-item[0] for item in ranked], dtype=np.float64)
    return is_tp, confidences


def pr_curve_from_matches(is_tp: np.ndarray, n_gt: int) -> PrCurve:
    """Right-interpolated precision at recall k/40; recall tests use integer arithmetic."""
    if n_gt <= 0:
        raise EvaluationError("average precision is undefined without ground-truth boxes")
    tp = np.cumsum(is_tp.astype(np.int64))
    ranks = np.arange(1, tp.size + 1)
    precision_raw = tp / ranks if tp.size else np.zeros(0)
    precision = np.zeros(RECALL_POINTS)
    for k in range(1, RECALL_POINTS + 1):
        reached = tp * RECALL_POINTS >= k * n_gt
        if reached.any():
            precision[k - 1] = float(precision_raw[reached].max())
    recall = np.arange(1, RECALL_POINTS + 1) / RECALL_POINTS
    return PrCurve(recall=recall, precision=precision, ap=float(precision.mean()), n_gt=n_gt, n_det=int(tp.size))


def average_precision_40_frames(frames: Sequence[Frame], iou_threshold: float) -> PrCurve:
    if not 0.0 < iou_threshold <= 1.0:
        raise ParameterError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    n_gt = sum(len(gts) for _, gts in frames)
    if n_gt == 0:
        raise EvaluationError("average precision is undefined without ground-truth boxes")
    is_tp, _ = match_detections(frames, iou_threshold)
    return pr_curve_from_matches(is_tp, n_gt)


def average_precision_40(
    dets: Sequence[Detection],
    gts: Sequence[OrientedBox3D],
    iou_threshold: float,
) -> PrCurve:
    """AP over one frame; class ids are ignored."""
    return average_precision_40_frames([(dets, gts)], iou_threshold)


LabeledBox = tuple[OrientedBox3D, int]


def per_class_ap_frames(
    frames: Sequence[tuple[Sequence[Detection], Sequence[LabeledBox]]],
    iou_threshold: float,
) -> dict[int, PrCurve]:
    """AP for every class id that has at least one ground-truth box."""
    classes = sorted({c for _, gts in frames for _, c in gts})
    curves = {}
    for c in classes:
        split = [
            ([d for d in dets if d.class_id == c], [b for b, k in gts if k == c])
            for dets, gts in frames
        ]
        curves[c] = average_precision_40_frames(split, iou_threshold)
    return curves


def map_multiclass_frames(
    frames: Sequence[tuple[Sequence[Detection], Sequence[LabeledBox]]],
    iou_threshold: float,
) -> float:
    curves = per_class_ap_frames(frames, iou_threshold)
    if not curves:
        raise EvaluationError("no class has ground-truth boxes")
    return float(np.mean([c.ap for c in curves.values()]))


def map_multiclass(dets: Sequence[Detection], gts: Sequence[LabeledBox], iou_threshold: float) -> float:
    """Mean of the per-class AP over classes with at least one ground-truth box."""
    return map_multiclass_frames([(dets, gts)], iou_threshold)


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def format_metrics_text(mapping: Mapping[str, Any]) -> str:
    """Flat `key: value` block in insertion order."""
    return "".join(f"{key}: {_format_value(value)}\n" for key, value in mapping.items())


def metrics_to_json(mapping: Mapping[str, Any]) -> str:
    return json.dumps(mapping, sort_keys=True, indent=2) + "\n"
