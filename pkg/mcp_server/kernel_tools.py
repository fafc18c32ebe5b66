"""
Plain-data wrappers around the kernels. Every tool takes JSON-friendly
arguments and returns a dict; failures come back as {"error": ...}.
"""
import logging
from typing import Any, Optional

import numpy as np

from vr3dense.box_geometry import OrientedBox3D, ProjectedPoints, giou_3d, iou_3d, iou_bev, project_points
from vr3dense.config import DensityMode, RunConfig
from vr3dense.detection_codec import Detection
from vr3dense.errors import Vr3denseError
from vr3dense.evaluation import average_precision_40, depth_metrics, per_class_ap_frames
from vr3dense.kitti_io import parse_calib
from vr3dense.voxel_grid import normalize_density, voxelize

logger = logging.getLogger(__name__)


def _box(values: list[float]) -> OrientedBox3D:
    if len(values) != 7:
        raise ValueError(f"a box is [x, y, z, l, w, h, yaw], got {len(values)} values")
    return OrientedBox3D.from_array(values)


def _error(e: Exception) -> dict:
    code = e.code if isinstance(e, Vr3denseError) else "invalid-argument"
    return {"error": str(e), "code": code}


def box_overlap(box_a: list[float], box_b: list[float]) -> dict:
    """BEV IoU, 3D IoU and GIoU of two [x, y, z, l, w, h, yaw] boxes."""
    try:
        a, b = _box(box_a), _box(box_b)
        return {"iou_bev": iou_bev(a, b), "iou_3d": iou_3d(a, b), "giou_3d": giou_3d(a, b)}
    except (Vr3denseError, ValueError) as e:
        return _error(e)


def voxel_stats(points: list[list[float]], cfg: RunConfig, density_mode: Optional[str] = None) -> dict:
    """Voxelize an (N, 4) scan with the configured ROI."""
    try:
        scan = np.asarray(points, dtype=np.float32).reshape(-1, 4)
        grid = voxelize(scan, cfg.roi)
        mode = DensityMode(density_mode) if density_mode else cfg.density_mode
        normalized = normalize_density(grid, mode)
        return {
            "dims": list(cfg.roi.dims),
            "points_in_roi": int(round(grid.total)),
            "occupied_voxels": normalized.occupied,
            "density_sum": normalized.total,
            "density_mode": mode.value,
        }
    except (Vr3denseError, ValueError) as e:
        return _error(e)


def project_scan(points: list[list[float]], calib_text: str, height: int, width: int, cfg: RunConfig) -> dict:
    """Project a scan into the left image; returns [u, v, depth] rows, nearest point per pixel."""
    try:
        calib = parse_calib(calib_text, default_baseline=cfg.default_baseline)
        projected = project_points(np.asarray(points, dtype=np.float32).reshape(-1, 4), calib, (height, width))
        rows = np.stack([projected.u, projected.v, projected.depth], axis=1) if len(projected) else np.zeros((0, 3))
        return {"count": len(projected), "points": rows.tolist()}
    except (Vr3denseError, ValueError) as e:
        return _error(e)


def depth_report(pred: list[list[float]], gt_points: list[list[float]], cfg: RunConfig) -> dict:
    """Depth metrics of a dense prediction against [u, v, depth] samples."""
    try:
        samples = np.asarray(gt_points, dtype=np.float64).reshape(-1, 3)
        gt = ProjectedPoints(u=samples[:, 0], v=samples[:, 1], depth=samples[:, 2])
        return depth_metrics(np.asarray(pred, dtype=np.float64), gt, depth_range=cfg.depth_range).as_dict()
    except (Vr3denseError, ValueError) as e:
        return _error(e)


def _detections(dets: list[dict[str, Any]]) -> list[Detection]:
    return [
        Detection(box=_box(d["box"]), confidence=float(d["confidence"]), class_id=int(d.get("class_id", 0)))
        for d in dets
    ]


def average_precision(dets: list[dict[str, Any]], gts: list[dict[str, Any]], iou_threshold: float) -> dict:
    """
    AP at 40 recall points for one frame. Each detection is
    {"box", "confidence", "class_id"}; each ground truth is {"box", "class_id"}.
    """
    try:
        detections = _detections(dets)
        labeled = [(_box(g["box"]), int(g.get("class_id", 0))) for g in gts]
        overall = average_precision_40(detections, [b for b, _ in labeled], iou_threshold)
        per_class = per_class_ap_frames([(detections, labeled)], iou_threshold)
        return {
            "ap40": overall.ap,
            "per_class": {str(c): curve.ap for c, curve in per_class.items()},
            "map40": float(np.mean([c.ap for c in per_class.values()])),
            "n_gt": overall.n_gt,
            "n_det": overall.n_det,
        }
    except (Vr3denseError, ValueError, KeyError, TypeError) as e:
        return _error(e)
