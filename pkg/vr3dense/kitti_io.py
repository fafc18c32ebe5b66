"""
Readers and writers for KITTI velodyne scans, object labels, calibration
files, and binary PPM/PGM images.

Frames:
    velodyne: x forward, y left, z up
    rect camera: x right, y down, z forward
    image: u right, v down
"""
import logging
import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from .errors import FormatError, ParameterError

logger = logging.getLogger(__name__)

POINT_STRIDE = 16
DEPTH_PGM_SCALE = 256.0
DEFAULT_BASELINE = 0.54

# Point clouds are (N, 4) float32 arrays: x, y, z, intensity.
PointCloud = npt.NDArray[np.float32]


# ---------------------------------------------------------------- velodyne

def read_point_cloud(data: bytes) -> PointCloud:
    """Parse consecutive little-endian float32 quadruples (x, y, z, intensity)."""
    if len(data) % POINT_STRIDE:
        offset = (len(data) // POINT_STRIDE) * POINT_STRIDE
        raise FormatError(
            f"velodyne scan length {len(data)} is not a multiple of {POINT_STRIDE} "
            f"(dangling bytes at offset {offset})",
            offset=offset,
        )
    points = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float32)
    bad = ~np.isfinite(points[:, :3]).all(axis=1)
    if bad.any():
        index = int(np.argmax(bad))
        raise FormatError(
            f"non-finite coordinate in point {index} (offset {index * POINT_STRIDE})",
            offset=index * POINT_STRIDE,
        )
    logger.debug(f"read {points.shape[0]} velodyne points")
    return points


def write_point_cloud(points: npt.ArrayLike) -> bytes:
    arr = np.asarray(points, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ParameterError(f"point cloud must be (N, 4), got shape {arr.shape}")
    return arr.astype("<f4").tobytes()


# ------------------------------------------------------------------ labels

@dataclass(frozen=True)
class ObjectLabel:
    class_name: str
    truncated: float
    occluded: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]  # height, width, length
    location: tuple[float, float, float]  # bottom center, rect camera frame
    rotation_y: float
    score: Optional[float] = None

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == "DontCare"


_LABEL_FIELDS = 15


def parse_label_line(line: str, with_score: bool = False) -> ObjectLabel:
    """
    Map a KITTI label_2 line onto an ObjectLabel. An optional 16th score
    field is ignored unless `with_score` asks for it (detection files).
    """
    fields = line.split()
    if len(fields) < _LABEL_FIELDS:
        raise FormatError(
            f"label line has {len(fields)} fields, expected {_LABEL_FIELDS} (missing field {len(fields) + 1})",
            field=len(fields) + 1,
        )
    values = []
    for index, token in enumerate(fields[1:_LABEL_FIELDS], start=2):
        try:
            values.append(float(token))
        except ValueError:
            raise FormatError(f"label field {index} is not numeric: '{token}'", field=index) from None
    score = None
    if with_score and len(fields) > _LABEL_FIELDS:
        try:
            score = float(fields[_LABEL_FIELDS])
        except ValueError:
            raise FormatError(f"label field 16 (score) is not numeric: '{fields[_LABEL_FIELDS]}'", field=16) from None
    occluded = values[1]
    if occluded != int(occluded):
        raise FormatError(f"label field 3 (occluded) must be an integer, got {occluded}", field=3)

    label = ObjectLabel(
        class_name=fields[0],
        truncated=values[0],
        occluded=int(occluded),
        alpha=values[2],
        bbox2d=tuple(values[3:7]),
        dimensions=tuple(values[7:10]),
        location=tuple(values[10:13]),
        rotation_y=values[13],
        score=score,
    )
    if not label.is_dontcare:
        if min(label.dimensions) < 0:
            raise FormatError(f"label dimensions must be >= 0, got {label.dimensions}", field=9)
        if abs(label.rotation_y) > math.pi + 1e-6:
            raise FormatError(f"rotation_y must lie in [-pi, pi], got {label.rotation_y}", field=15)
    return label


def format_label_line(label: ObjectLabel, score: Optional[float] = None) -> str:
    """Serialize with 2-decimal fields; `score` (or label.score) becomes the 16th field."""
    numbers = [
        label.truncated,
        label.occluded,
        label.alpha,
        *label.bbox2d,
        *label.dimensions,
        *label.location,
        label.rotation_y,
    ]
    parts = [label.class_name, f"{numbers[0]:.2f}", str(int(numbers[1]))]
    parts += [f"{v:.2f}" for v in numbers[2:]]
    score = label.score if score is None else score
    if score is not None:
        parts.append(f"{score:.4f}")
    return " ".join(parts)


def read_label_file(text: str, with_score: bool = False) -> list[ObjectLabel]:
    return [parse_label_line(line, with_score) for line in text.splitlines() if line.strip()]


# ------------------------------------------------------------- calibration

@dataclass(frozen=True)
class Calibration:
    P2: np.ndarray  # (3, 4)
    R0_rect: np.ndarray  # (3, 3)
    Tr_velo_to_cam: np.ndarray  # (3, 4)
    focal: float
    baseline: float
    P3: Optional[np.ndarray] = None

    @property
    def cx(self) -> float:
        return float(self.P2[0, 2])

    @property
    def cy(self) -> float:
        return float(self.P2[1, 2])

    def velo_to_rect(self) -> np.ndarray:
        """4x4 homogeneous transform R0_rect * Tr_velo_to_cam."""
        r0 = np.eye(4)
        r0[:3, :3] = self.R0_rect
        tr = np.eye(4)
        tr[:3, :] = self.Tr_velo_to_cam
        return r0 @ tr

    def to_text(self) -> str:
        rows = [("P2", self.P2), ("R0_rect", self.R0_rect), ("Tr_velo_to_cam", self.Tr_velo_to_cam)]
        if self.P3 is not None:
            rows.insert(1, ("P3", self.P3))
        return "".join(f"{key}: " + " ".join(f"{v:.12e}" for v in m.ravel()) + "\n" for key, m in rows)


_CALIB_SHAPES = {"P2": (3, 4), "R0_rect": (3, 3), "Tr_velo_to_cam": (3, 4)}
_CALIB_LINE = re.compile(r"^\s*([A-Za-z0-9_]+)\s*:(.*)$")


def parse_calib(text: str, default_baseline: float = DEFAULT_BASELINE) -> Calibration:
    """
    Parse "KEY: v1 v2 ..." lines. P2, R0_rect and Tr_velo_to_cam are required;
    P3 (when present) fixes the stereo baseline, otherwise `default_baseline` is used.
    """
    entries: dict[str, list[str]] = {}
    for line in text.splitlines():
        match = _CALIB_LINE.match(line)
        if match:
            entries[match.group(1)] = match.group(2).split()

    matrices: dict[str, np.ndarray] = {}
    wanted = dict(_CALIB_SHAPES)
    if "P3" in entries:
        wanted["P3"] = (3, 4)
    for key, shape in wanted.items():
        if key not in entries:
            raise FormatError(f"calibration is missing key {key}", key=key)
        try:
            values = np.array([float(v) for v in entries[key]], dtype=np.float64)
        except ValueError:
            raise FormatError(f"calibration key {key} holds a non-numeric value", key=key) from None
        if values.size != shape[0] * shape[1]:
            raise FormatError(
                f"calibration key {key} needs {shape[0] * shape[1]} numbers, got {values.size}", key=key
            )
        matrices[key] = values.reshape(shape)

    p2 = matrices["P2"]
    focal = float(p2[0, 0])
    if not focal > 0:
        raise FormatError(f"P2 focal length must be > 0, got {focal}", key="P2")
    p3 = matrices.get("P3")
    baseline = (p2[0, 3] - p3[0, 3]) / focal if p3 is not None else default_baseline
    if not baseline > 0:
        raise FormatError(f"stereo baseline must be > 0, got {baseline}", key="P3" if p3 is not None else "P2")

    r0 = matrices["R0_rect"]
    if np.abs(r0.T @ r0 - np.eye(3)).max() >= 1e-3:
        raise FormatError("R0_rect is not orthonormal", key="R0_rect")

    return Calibration(
        P2=p2,
        R0_rect=r0,
        Tr_velo_to_cam=matrices["Tr_velo_to_cam"],
        focal=focal,
        baseline=float(baseline),
        P3=p3,
    )


# ------------------------------------------------------------------ images

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_pnm_header(data: bytes) -> tuple[bytes, int, int, int, int]:
    """Return (magic, width, height, maxval, payload offset)."""
    tokens = []
    pos = 0
    for _ in range(4):
        match = _PNM_TOKEN.match(data, pos)
        if not match:
            raise FormatError("truncated PNM header", offset=pos)
        tokens.append(match.group(1))
        pos = match.end()
        if len(tokens) == 1 and tokens[0] not in (b"P5", b"P6"):
            raise FormatError(f"unsupported PNM magic {tokens[0]!r}", offset=0)
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(data) or data[pos:pos + 1] not in b" \t\r\n":
        raise FormatError("PNM header is not terminated by whitespace", offset=pos)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-integer PNM header field", offset=0) from None
    if width < 1 or height < 1:
        raise FormatError(f"PNM size must be positive, got {width}x{height}", offset=0)
    if maxval not in (255, 65535):
        raise FormatError(f"unsupported PNM maxval {maxval} (8- and 16-bit only)", offset=0)
    return tokens[0], width, height, maxval, pos + 1


def _read_pnm_samples(data: bytes) -> tuple[np.ndarray, int]:
    magic, width, height, maxval, offset = _read_pnm_header(data)
    channels = 3 if magic == b"P6" else 1
    dtype = ">u2" if maxval == 65535 else "u1"
    count = width * height * channels
    needed = count * np.dtype(dtype).itemsize
    if len(data) - offset < needed:
        raise FormatError(f"truncated PNM payload: need {needed} bytes, have {len(data) - offset}", offset=offset)
    samples = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    shape = (height, width, channels) if channels == 3 else (height, width)
    return samples.reshape(shape), maxval


def read_image(data: bytes) -> np.ndarray:
    """Binary PPM (P6) or PGM (P5), 8- or 16-bit, normalized to [0, 1]."""
    samples, maxval = _read_pnm_samples(data)
    return samples.astype(np.float64) / maxval


def _quantize(img: np.ndarray, scale: float) -> np.ndarray:
    # round half up
    return np.floor(img * scale + 0.5).astype(np.int64)


def write_image(img: npt.ArrayLike) -> bytes:
    """8-bit P6 for (H, W, 3) images, 8-bit P5 for (H, W) images."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise ParameterError(f"cannot write image of shape {arr.shape} as PNM")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0 or not np.isfinite(arr).all()):
        raise ParameterError("photometric image values must lie in [0, 1]")
    height, width = arr.shape[:2]
    header = b"%s\n%d %d\n255\n" % (magic, width, height)
    return header + _quantize(arr, 255).astype("u1").tobytes()


def read_depth_pgm(data: bytes, scale: float = DEPTH_PGM_SCALE) -> np.ndarray:
    """16-bit P5 depth map to meters; 0 counts mean "no sample"."""
    samples, maxval = _read_pnm_samples(data)
    if samples.ndim != 2:
        raise FormatError("depth maps must be single-channel P5", offset=0)
    if maxval != 65535:
        raise FormatError("depth maps must be 16-bit P5", offset=0)
    return samples.astype(np.float64) / scale


def write_depth_pgm(depth: npt.ArrayLike, scale: float = DEPTH_PGM_SCALE) -> bytes:
    arr = np.asarray(depth, dtype=np.float64)
    if arr.ndim != 2:
        raise ParameterError(f"depth map must be (H, W), got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or not np.isfinite(arr).all()):
        raise ParameterError("depth values must be finite and >= 0")
    counts = _quantize(arr, scale)
    if counts.size and counts.max() > 65535:
        logger.warning(f"depth beyond {65535 / scale:.2f} m saturates the 16-bit PGM range")
        counts = np.minimum(counts, 65535)
    height, width = arr.shape
    header = b"P5\n%d %d\n65535\n" % (width, height)
    return header + counts.astype(">u2").tobytes()
