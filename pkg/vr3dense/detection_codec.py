"""
Grid target tensors: encode ground-truth boxes into a G x G grid of
(confidence, pose, class) vectors, decode predictions back into boxes,
suppress duplicates, and dump tensors to disk.

Channel layout per cell:
    0        confidence
    1..3     center x, y, z (absolute meters, LiDAR frame)
    4..6     length, width, height
    7, 8     cos(yaw), sin(yaw)
    9..      class scores (one-hot for ground truth, logits for predictions)
"""
import logging
import math
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .box_geometry import OrientedBox3D, iou_bev, lidar_box_to_label
from .config import RoiConfig
from .errors import FormatError, ParameterError
from .kitti_io import Calibration, format_label_line

logger = logging.getLogger(__name__)

DEFAULT_GRID_CELLS = 16
POSE_CHANNELS = 8
CONF = 0
POSE = slice(1, 9)
CENTER = slice(1, 4)
SIZE = slice(4, 7)
COS, SIN = 7, 8
CLASS_OFFSET = 9
MIN_DECODED_SIZE = 1e-3

TENSOR_MAGIC = b"VRT1"
_TENSOR_HEADER = struct.Struct("<4s4i")


@dataclass(frozen=True)
class TargetTensor:
    grid: np.ndarray  # (G, G, 9 + class_count), indexed [ix, iy, channel]
    class_count: int

    def __post_init__(self):
        if self.grid.ndim != 3 or self.grid.shape[2] != CLASS_OFFSET + self.class_count:
            raise ParameterError(
                f"tensor shape {self.grid.shape} does not fit {self.class_count} classes"
            )

    @property
    def cells(self) -> tuple[int, int]:
        return self.grid.shape[0], self.grid.shape[1]

    @property
    def confidence(self) -> np.ndarray:
        return self.grid[..., CONF]

    @property
    def class_scores(self) -> np.ndarray:
        return self.grid[..., CLASS_OFFSET:]

    def occupied(self) -> np.ndarray:
        """Boolean (G, G) mask of cells holding a ground-truth object."""
        return self.grid[..., CONF] > 0.5

    @classmethod
    def zeros(cls, class_count: int, cells: int = DEFAULT_GRID_CELLS) -> "TargetTensor":
        return cls(np.zeros((cells, cells, CLASS_OFFSET + class_count)), class_count)


@dataclass(frozen=True)
class Detection:
    box: OrientedBox3D
    confidence: float
    class_id: int
    class_scores: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ParameterError(f"detection confidence must lie in [0, 1], got {self.confidence}")


def cell_of(x: float, y: float, roi: RoiConfig, cells: int = DEFAULT_GRID_CELLS) -> Optional[tuple[int, int]]:
    """BEV cell of a point under the ROI's cells x cells partition, or None outside."""
    index = []
    for v, (lo, hi) in zip((x, y), (roi.x_range, roi.y_range)):
        if not lo <= v < hi:
            return None
        width = (hi - lo) / cells
        index.append(min(int(math.floor((v - lo) / width)), cells - 1))
    return index[0], index[1]


def _in_roi(box: OrientedBox3D, roi: RoiConfig) -> bool:
    return all(lo <= v < hi for v, (lo, hi) in zip(box.center, roi.ranges))


def encode_pose(box: OrientedBox3D) -> np.ndarray:
    return np.array([*box.center, *box.size, math.cos(box.yaw), math.sin(box.yaw)])


def encode_targets(
    boxes: Sequence[tuple[OrientedBox3D, int]],
    roi: RoiConfig,
    n_classes: int,
    cells: int = DEFAULT_GRID_CELLS,
) -> TargetTensor:
    """
    Place each box in the cell holding its BEV center. Boxes centered outside
    the ROI are dropped; when two boxes share a cell the larger BEV footprint
    wins (the earlier box on an exact tie).
    """
    if n_classes < 1:
        raise ParameterError(f"n_classes must be >= 1, got {n_classes}")
    tensor = TargetTensor.zeros(n_classes, cells)
    grid = tensor.grid
    winners: dict[tuple[int, int], OrientedBox3D] = {}
    dropped = 0
    for box, class_id in boxes:
        if not 0 <= class_id < n_classes:
            raise ParameterError(f"class id {class_id} outside [0, {n_classes})")
        cell = cell_of(box.center[0], box.center[1], roi, cells) if _in_roi(box, roi) else None
        if cell is None:
            dropped += 1
            continue
        current = winners.get(cell)
        if current is not None and current.footprint >= box.footprint:
            continue
        winners[cell] = box
        grid[cell][:] = 0.0
        grid[cell][CONF] = 1.0
        grid[cell][POSE] = encode_pose(box)
        grid[cell][CLASS_OFFSET + class_id] = 1.0
    if dropped:
        logger.debug(f"encode_targets dropped {dropped} boxes centered outside the ROI")
    return tensor


def decode_pose(pose: np.ndarray) -> OrientedBox3D:
    """Box from the 8 pose channels; sizes floored at MIN_DECODED_SIZE, yaw in (-pi, pi]."""
    yaw = math.atan2(float(pose[7]), float(pose[6]))
    if yaw == -math.pi:
        yaw = math.pi
    size = np.maximum(pose[3:6], MIN_DECODED_SIZE)
    return OrientedBox3D(
        center=(float(pose[0]), float(pose[1]), float(pose[2])),
        size=(float(size[0]), float(size[1]), float(size[2])),
        yaw=yaw,
    )


def decode_predictions(t: TargetTensor, roi: RoiConfig, conf_threshold: float) -> list[Detection]:
    """Every cell with confidence >= threshold, in row-major cell order."""
    if not 0.0 <= conf_threshold <= 1.0:
        raise ParameterError(f"conf_threshold must lie in [0, 1], got {conf_threshold}")
    detections = []
    for ix, iy in zip(*np.nonzero(t.confidence >= conf_threshold)):
        cell = t.grid[ix, iy]
        scores = cell[CLASS_OFFSET:]
        detections.append(
            Detection(
                box=decode_pose(cell[POSE]),
                confidence=float(np.clip(cell[CONF], 0.0, 1.0)),
                class_id=int(np.argmax(scores)),
                class_scores=tuple(float(s) for s in scores),
            )
        )
    logger.debug(f"decoded {len(detections)} detections at threshold {conf_threshold} over ROI {roi.x_range}x{roi.y_range}")
    return detections


def nms_bev(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy class-aware suppression by BEV IoU, highest confidence first."""
    if not 0.0 <= iou_threshold <= 1.0:
        raise ParameterError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    kept: list[Detection] = []
    for i in order:
        det = dets[i]
        if all(k.class_id != det.class_id or iou_bev(k.box, det.box) < iou_threshold for k in kept):
            kept.append(det)
    return kept


def detections_to_label_lines(
    dets: Sequence[Detection],
    calib: Calibration,
    class_names: Sequence[str],
    image_size: Optional[tuple[int, int]] = None,
) -> list[str]:
    """KITTI label lines with the detection confidence as the 16th field."""
    lines = []
    for det in dets:
        if det.class_id >= len(class_names):
            raise ParameterError(f"class id {det.class_id} has no name in {list(class_names)}")
        label = lidar_box_to_label(det.box, calib, class_names[det.class_id], image_size=image_size)
        lines.append(format_label_line(label, score=det.confidence))
    return lines


def write_tensor(t: TargetTensor) -> bytes:
    """
    Layout: magic "VRT1", four little-endian int32 (rows, cols, channels,
    class_count), then float64 values in [ix, iy, channel] order.
    """
    rows, cols, channels = t.grid.shape
    header = _TENSOR_HEADER.pack(TENSOR_MAGIC, rows, cols, channels, t.class_count)
    return header + np.ascontiguousarray(t.grid, dtype="<f8").tobytes()


def read_tensor(data: bytes) -> TargetTensor:
    if len(data) < _TENSOR_HEADER.size:
        raise FormatError("tensor dump shorter than its header", offset=len(data))
    magic, rows, cols, channels, class_count = _TENSOR_HEADER.unpack_from(data)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}", offset=0)
    if min(rows, cols) < 1 or channels != CLASS_OFFSET + class_count or class_count < 1:
        raise FormatError(
            f"inconsistent tensor header rows={rows} cols={cols} channels={channels} classes={class_count}",
            offset=4,
        )
    expected = rows * cols * channels * 8
    if len(data) - _TENSOR_HEADER.size != expected:
        raise FormatError(
            f"tensor payload is {len(data) - _TENSOR_HEADER.size} bytes, expected {expected}",
            offset=_TENSOR_HEADER.size,
        )
    grid = np.frombuffer(data, dtype="<f8", offset=_TENSOR_HEADER.size).reshape(rows, cols, channels).astype(np.float64)
    return TargetTensor(grid=grid, class_count=class_count)
