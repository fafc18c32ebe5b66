"""
Yaw-oriented 3D box math (corners, BEV clipping, IoU, GIoU) and the
LiDAR / camera / image frame chain.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
import numpy.typing as npt

from .errors import CalibrationError, ParameterError
from .kitti_io import Calibration, ObjectLabel

logger = logging.getLogger(__name__)

AREA_EPS = 1e-12


def wrap_angle(angle: float) -> float:
    """Wrap to [-pi, pi)."""
    return float((angle + math.pi) % (2.0 * math.pi) - math.pi)


@dataclass(frozen=True)
class OrientedBox3D:
    center: tuple[float, float, float]  # LiDAR frame, geometric center
    size: tuple[float, float, float]  # length (along heading), width, height
    yaw: float  # radians about +z

    def __post_init__(self):
        if len(self.center) != 3 or len(self.size) != 3:
            raise ParameterError("box center and size need three components each")
        if min(self.size) <= 0:
            raise ParameterError(f"box size components must be > 0, got {self.size}")

    @property
    def volume(self) -> float:
        l, w, h = self.size
        return l * w * h

    @property
    def footprint(self) -> float:
        return self.size[0] * self.size[1]

    def as_array(self) -> np.ndarray:
        return np.array([*self.center, *self.size, self.yaw], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "OrientedBox3D":
        v = [float(x) for x in values]
        return cls(center=(v[0], v[1], v[2]), size=(v[3], v[4], v[5]), yaw=v[6])


# Local corner order: bottom face counter-clockwise seen from above, then top face.
_LOCAL_CORNERS = np.array(
    [
        [0.5, 0.5, -0.5],
        [-0.5, 0.5, -0.5],
        [-0.5, -0.5, -0.5],
        [0.5, -0.5, -0.5],
        [0.5, 0.5, 0.5],
        [-0.5, 0.5, 0.5],
        [-0.5, -0.5, 0.5],
        [0.5, -0.5, 0.5],
    ]
)


def _rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def box_corners(box: OrientedBox3D) -> np.ndarray:
    """(8, 3) corners: center + R(yaw) (+-l/2, +-w/2, +-h/2)."""
    local = _LOCAL_CORNERS * np.array(box.size)
    return local @ _rot_z(box.yaw).T + np.array(box.center)


def bev_polygon(box: OrientedBox3D) -> np.ndarray:
    """(4, 2) counter-clockwise footprint."""
    return box_corners(box)[:4, :2]


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area (absolute)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_clip(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """
    Sutherland-Hodgman clipping of `subject` by the convex, counter-clockwise
    polygon `clip`. Points on a clip edge count as inside.
    """

    def inside(p, a, b):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -AREA_EPS

    def intersection(s, e, a, b):
        dc = a - b
        dp = s - e
        den = dc[0] * dp[1] - dc[1] * dp[0]
        if abs(den) < 1e-18:
            return e
        n1 = a[0] * b[1] - a[1] * b[0]
        n2 = s[0] * e[1] - s[1] * e[0]
        return np.array([(n1 * dp[0] - n2 * dc[0]) / den, (n1 * dp[1] - n2 * dc[1]) / den])

    output = [np.asarray(p, dtype=np.float64) for p in subject]
    a = clip[-1]
    for b in clip:
        if not output:
            break
        candidates = output
        output = []
        s = candidates[-1]
        for e in candidates:
            if inside(e, a, b):
                if not inside(s, a, b):
                    output.append(intersection(s, e, a, b))
                output.append(e)
            elif inside(s, a, b):
                output.append(intersection(s, e, a, b))
            s = e
        a = b
    return np.array(output).reshape(-1, 2)


def bev_intersection_area(a: OrientedBox3D, b: OrientedBox3D) -> float:
    area = polygon_area(polygon_clip(bev_polygon(a), bev_polygon(b)))
    return area if area > AREA_EPS else 0.0


def _z_overlap(a: OrientedBox3D, b: OrientedBox3D) -> float:
    a_lo, a_hi = a.center[2] - a.size[2] / 2, a.center[2] + a.size[2] / 2
    b_lo, b_hi = b.center[2] - b.size[2] / 2, b.center[2] + b.size[2] / 2
    return max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))


def intersection_volume(a: OrientedBox3D, b: OrientedBox3D) -> float:
    dz = _z_overlap(a, b)
    if dz <= 0.0:
        return 0.0
    return bev_intersection_area(a, b) * dz


def _overlap(a: OrientedBox3D, b: OrientedBox3D) -> tuple[float, float]:
    """(intersection, union) volumes."""
    inter = intersection_volume(a, b)
    return inter, a.volume + b.volume - inter


def iou_bev(a: OrientedBox3D, b: OrientedBox3D) -> float:
    inter = bev_intersection_area(a, b)
    union = a.footprint + b.footprint - inter
    return min(1.0, max(0.0, inter / union))


def iou_3d(a: OrientedBox3D, b: OrientedBox3D) -> float:
    inter, union = _overlap(a, b)
    return min(1.0, max(0.0, inter / union))


def _aligned_extent_volume(corners: np.ndarray, yaw: float) -> float:
    local = corners @ _rot_z(yaw)
    return float(np.prod(local.max(axis=0) - local.min(axis=0)))


def enclosing_volume(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """
    Smallest of three z-upright boxes holding all 16 corners: aligned to the
    LiDAR axes, to a's heading and to b's heading. Equals the box volume
    when a == b.
    """
    corners = np.vstack([box_corners(a), box_corners(b)])
    return min(_aligned_extent_volume(corners, yaw) for yaw in (0.0, a.yaw, b.yaw))


def giou_3d(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """IoU - (|C| - |U|) / |C| with C from `enclosing_volume`."""
    inter, union = _overlap(a, b)
    iou = min(1.0, max(0.0, inter / union))
    enclosing = max(enclosing_volume(a, b), union)
    return iou - (enclosing - union) / enclosing


# ------------------------------------------------------------- frame chain

def _as_points(points: npt.ArrayLike) -> tuple[np.ndarray, bool]:
    arr = np.asarray(points, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)[:, :3]
    return arr, single


def lidar_to_camera(points: npt.ArrayLike, calib: Calibration) -> np.ndarray:
    """x_cam = R0_rect * Tr_velo_to_cam * (x, y, z, 1). Accepts (3,) or (N, >=3)."""
    xyz, single = _as_points(points)
    t = calib.velo_to_rect()
    cam = xyz @ t[:3, :3].T + t[:3, 3]
    return cam[0] if single else cam


def camera_to_lidar(points: npt.ArrayLike, calib: Calibration) -> np.ndarray:
    xyz, single = _as_points(points)
    t = calib.velo_to_rect()
    try:
        inv = np.linalg.inv(t)
    except np.linalg.LinAlgError as e:
        raise CalibrationError(f"velo-to-rect transform is singular: {e}") from e
    if not np.isfinite(inv).all() or np.linalg.cond(t) > 1e12:
        raise CalibrationError("velo-to-rect transform is numerically singular")
    lidar = xyz @ inv[:3, :3].T + inv[:3, 3]
    return lidar[0] if single else lidar


@dataclass(frozen=True)
class ProjectedPoint:
    u: float
    v: float
    depth: float


@dataclass(frozen=True)
class ProjectedPoints:
    """Columnar list of projected LiDAR returns; iterates as ProjectedPoint."""

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray

    def __len__(self) -> int:
        return int(self.depth.size)

    def __iter__(self) -> Iterator[ProjectedPoint]:
        for u, v, d in zip(self.u, self.v, self.depth):
            yield ProjectedPoint(float(u), float(v), float(d))

    @property
    def rows(self) -> np.ndarray:
        return np.floor(self.v).astype(np.int64)

    @property
    def cols(self) -> np.ndarray:
        return np.floor(self.u).astype(np.int64)

    @classmethod
    def empty(cls) -> "ProjectedPoints":
        z = np.zeros(0, dtype=np.float64)
        return cls(u=z, v=z.copy(), depth=z.copy())

    @classmethod
    def from_points(cls, points: Sequence[ProjectedPoint]) -> "ProjectedPoints":
        if not points:
            return cls.empty()
        arr = np.array([(p.u, p.v, p.depth) for p in points], dtype=np.float64)
        return cls(u=arr[:, 0], v=arr[:, 1], depth=arr[:, 2])


def project_camera_points(cam: np.ndarray, calib: Calibration, image_size: tuple[int, int]) -> ProjectedPoints:
    """Project rect-camera points through P2, keep in-image points, nearest depth per pixel."""
    h, w = image_size
    if cam.size == 0:
        return ProjectedPoints.empty()
    homog = np.hstack([cam, np.ones((cam.shape[0], 1))])
    proj = homog @ calib.P2.T
    depth = cam[:, 2]
    valid = (depth > 0) & (proj[:, 2] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = proj[:, 0] / proj[:, 2]
        v = proj[:, 1] / proj[:, 2]
    valid &= (u >= 0) & (u < w) & (v >= 0) & (v < h)
    u, v, depth = u[valid], v[valid], depth[valid]

    key = np.floor(v).astype(np.int64) * w + np.floor(u).astype(np.int64)
    order = np.lexsort((depth, key))
    key = key[order]
    keep = np.ones(key.size, dtype=bool)
    keep[1:] = key[1:] != key[:-1]
    order = order[keep]
    return ProjectedPoints(u=u[order], v=v[order], depth=depth[order])


def project_points(points: npt.ArrayLike, calib: Calibration, image_size: tuple[int, int]) -> ProjectedPoints:
    """
    Project a LiDAR cloud onto the left image. Points behind the camera or
    outside [0, w) x [0, h) are dropped; when several land on one pixel
    (floor of u, v) the smallest depth wins. Output is row-major by pixel.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return ProjectedPoints.empty()
    projected = project_camera_points(lidar_to_camera(arr, calib), calib, image_size)
    logger.debug(f"projected {len(projected)} of {arr.shape[0]} points into {image_size}")
    return projected


def sparse_depth_map(projected: ProjectedPoints, image_size: tuple[int, int]) -> np.ndarray:
    """Rasterize projected points; pixels without a sample hold 0."""
    depth = np.zeros(image_size, dtype=np.float64)
    depth[projected.rows, projected.cols] = projected.depth
    return depth


# ------------------------------------------------------- label conversion

def label_to_lidar_box(label: ObjectLabel, calib: Calibration) -> OrientedBox3D:
    """
    KITTI label (bottom-center location in the rect camera frame, camera
    heading) to a LiDAR-frame box around the geometric center.
    """
    h, w, l = label.dimensions
    bottom = camera_to_lidar(np.array(label.location), calib)
    center = (float(bottom[0]), float(bottom[1]), float(bottom[2] + h / 2.0))
    yaw = wrap_angle(-label.rotation_y - math.pi / 2.0)
    return OrientedBox3D(center=center, size=(l, w, h), yaw=yaw)


def lidar_box_to_label(
    box: OrientedBox3D,
    calib: Calibration,
    class_name: str,
    score: Optional[float] = None,
    image_size: Optional[tuple[int, int]] = None,
) -> ObjectLabel:
    l, w, h = box.size
    bottom = np.array(box.center) - np.array([0.0, 0.0, h / 2.0])
    location = lidar_to_camera(bottom, calib)
    rotation_y = wrap_angle(-box.yaw - math.pi / 2.0)
    alpha = wrap_angle(rotation_y - math.atan2(location[0], location[2]))

    cam = lidar_to_camera(box_corners(box), calib)
    in_front = cam[:, 2] > 1e-6
    bbox = (0.0, 0.0, 0.0, 0.0)
    if in_front.any():
        homog = np.hstack([cam[in_front], np.ones((int(in_front.sum()), 1))]) @ calib.P2.T
        uv = homog[:, :2] / homog[:, 2:3]
        left, top = uv.min(axis=0)
        right, bottom_px = uv.max(axis=0)
        if image_size is not None:
            ih, iw = image_size
            left, right = np.clip([left, right], 0, iw - 1)
            top, bottom_px = np.clip([top, bottom_px], 0, ih - 1)
        bbox = (float(left), float(top), float(right), float(bottom_px))

    return ObjectLabel(
        class_name=class_name,
        truncated=0.0,
        occluded=0,
        alpha=alpha,
        bbox2d=bbox,
        dimensions=(h, w, l),
        location=(float(location[0]), float(location[1]), float(location[2])),
        rotation_y=rotation_y,
        score=score,
    )
