"""
Deterministic synthetic inputs: a textured stereo scene with known depth,
and random scans and boxes for oracle tests.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .box_geometry import OrientedBox3D, ProjectedPoints
from .config import RoiConfig
from .depth_losses import StereoPair
from .kitti_io import Calibration

logger = logging.getLogger(__name__)

SCENE_HEIGHT = 32
SCENE_WIDTH = 64
SCENE_FOCAL = 64.0
SCENE_BASELINE = 0.54


@dataclass(frozen=True)
class SyntheticScene:
    pair: StereoPair
    depth: np.ndarray  # ground-truth left depth (H, W)
    depth_r: np.ndarray  # ground-truth right depth (H, W)
    sparse: ProjectedPoints  # LiDAR-like samples of the left depth
    calib: Calibration

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    def scaled_depths(self, factor: float) -> tuple[np.ndarray, np.ndarray]:
        return self.depth * factor, self.depth_r * factor


def _texture(x: np.ndarray, y: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Smooth RGB texture varying mostly along rows; periods >= 11 px."""
    channels = []
    for c in range(3):
        p0, p1, p2 = phases[c]
        value = (
            0.5
            + 0.22 * np.sin(2.0 * math.pi * x / 13.0 + p0)
            + 0.14 * np.sin(2.0 * math.pi * x / 23.0 + p1)
            + 0.04 * np.sin(2.0 * math.pi * y / 17.0 + p2)
        )
        channels.append(value)
    return np.clip(np.stack(channels, axis=-1), 0.0, 1.0)


def scene_calibration(focal: float, baseline: float, cx: float, cy: float) -> Calibration:
    """Pinhole stereo rig with the velodyne frame mapped onto the camera axes."""
    p2 = np.array([[focal, 0.0, cx, 0.0], [0.0, focal, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
    p3 = p2.copy()
    p3[0, 3] = -focal * baseline
    # velodyne (x fwd, y left, z up) -> camera (x right, y down, z fwd)
    tr = np.array([[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
    return Calibration(P2=p2, R0_rect=np.eye(3), Tr_velo_to_cam=tr, focal=focal, baseline=baseline, P3=p3)


def make_stereo_scene(
    height: int = SCENE_HEIGHT,
    width: int = SCENE_WIDTH,
    focal: float = SCENE_FOCAL,
    baseline: float = SCENE_BASELINE,
    near: float = 8.0,
    far: float = 12.0,
    sparse_stride: int = 4,
    seed: int = 0,
) -> SyntheticScene:
    """
    Row-ramp depth (far at the top row, near at the bottom) constant along
    each row, so left and right depth maps coincide. The right image is the
    left texture evaluated at u + fb / D, which is exactly what the
    left-to-right warp reconstructs at the true depth.
    """
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(3, 3))
    rows = np.arange(height, dtype=np.float64)
    depth_rows = far + (near - far) * rows / max(height - 1, 1)
    depth = np.repeat(depth_rows[:, None], width, axis=1)
    disparity = focal * baseline / depth

    u, v = np.meshgrid(np.arange(width, dtype=np.float64), rows)
    left = _texture(u, v, phases)
    right = _texture(u + disparity, v, phases)

    ys, xs = np.mgrid[0:height:sparse_stride, 0:width:sparse_stride]
    sparse = ProjectedPoints(
        u=xs.ravel() + 0.5,
        v=ys.ravel() + 0.5,
        depth=depth[ys.ravel(), xs.ravel()].astype(np.float64),
    )
    calib = scene_calibration(focal, baseline, cx=width / 2.0, cy=height / 2.0)
    logger.debug(f"synthetic scene {height}x{width}, disparity {disparity.min():.3f}..{disparity.max():.3f} px")
    return SyntheticScene(
        pair=StereoPair(left=left, right=right, focal=focal, baseline=baseline),
        depth=depth,
        depth_r=depth.copy(),
        sparse=sparse,
        calib=calib,
    )


def random_points(rng: np.random.Generator, n: int, roi: RoiConfig, margin: float = 5.0) -> np.ndarray:
    """(n, 4) float32 scan; roughly a fifth of the points land outside the ROI."""
    lo = np.array(roi.mins) - margin
    hi = np.array(roi.maxs) + margin
    xyz = rng.uniform(lo, hi, size=(n, 3))
    intensity = rng.uniform(0.0, 1.0, size=(n, 1))
    return np.hstack([xyz, intensity]).astype(np.float32)


def random_box(
    rng: np.random.Generator,
    roi: RoiConfig,
    size_range: tuple[float, float] = (0.5, 5.0),
) -> OrientedBox3D:
    """Random box whose center lies inside the ROI."""
    center = tuple(float(rng.uniform(lo + 1e-6, hi - 1e-6)) for lo, hi in roi.ranges)
    size = tuple(float(s) for s in rng.uniform(*size_range, size=3))
    yaw = float(rng.uniform(-math.pi, math.pi))
    return OrientedBox3D(center=center, size=size, yaw=yaw)


def random_overlapping_pair(rng: np.random.Generator, roi: RoiConfig) -> tuple[OrientedBox3D, OrientedBox3D]:
    """Two boxes with nearby centers so that most pairs intersect."""
    a = random_box(rng, roi, (1.0, 4.0))
    offset = rng.normal(0.0, 1.0, size=3)
    center = tuple(float(c + o) for c, o in zip(a.center, offset))
    size = tuple(float(s) for s in rng.uniform(1.0, 4.0, size=3))
    b = OrientedBox3D(center=center, size=size, yaw=float(rng.uniform(-math.pi, math.pi)))
    return a, b
