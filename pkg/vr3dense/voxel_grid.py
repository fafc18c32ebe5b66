"""Point-cloud voxelization into a non-cubic density grid over the ROI."""
import logging
import math
import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt

from .config import DensityMode, RoiConfig
from .errors import FormatError, ParameterError

logger = logging.getLogger(__name__)

GRID_MAGIC = b"VXG1"
_HEADER = struct.Struct("<4s9i")

__all__ = [
    "RoiConfig",
    "DensityMode",
    "VoxelGrid",
    "voxel_index",
    "voxelize",
    "normalize_density",
    "in_roi_mask",
    "write_grid",
    "read_grid",
]


@dataclass(frozen=True)
class VoxelGrid:
    config: RoiConfig
    density: np.ndarray  # (nx, ny, nz) float64, indexed [ix, iy, iz]
    mode: DensityMode = DensityMode.RAW

    @property
    def total(self) -> float:
        return float(self.density.sum())

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.density))


def voxel_index(point: Sequence[float], config: RoiConfig) -> Optional[tuple[int, int, int]]:
    """Cell of a point under half-open [min, max) bins, or None outside the ROI."""
    index = []
    for v, (lo, hi), n in zip(point[:3], config.ranges, config.dims):
        v = float(v)
        if not lo <= v < hi:
            return None
        width = (hi - lo) / n
        index.append(min(int(math.floor((v - lo) / width)), n - 1))
    return tuple(index)


def in_roi_mask(points: npt.ArrayLike, config: RoiConfig) -> np.ndarray:
    xyz = np.asarray(points, dtype=np.float64)[:, :3]
    lo = np.array(config.mins)
    hi = np.array(config.maxs)
    return ((xyz >= lo) & (xyz < hi)).all(axis=1)


def _flat_indices(points: npt.ArrayLike, config: RoiConfig) -> np.ndarray:
    xyz = np.asarray(points, dtype=np.float64)[:, :3]
    xyz = xyz[in_roi_mask(xyz, config)]
    lo = np.array(config.mins)
    width = (np.array(config.maxs) - lo) / np.array(config.dims)
    ijk = np.floor((xyz - lo) / width).astype(np.int64)
    ijk = np.minimum(ijk, np.array(config.dims) - 1)
    nx, ny, nz = config.dims
    return (ijk[:, 0] * ny + ijk[:, 1]) * nz + ijk[:, 2]


def voxelize(points: npt.ArrayLike, config: RoiConfig) -> VoxelGrid:
    """
    Count points per voxel. Out-of-ROI points are ignored.

    Accumulation is an integer bincount, so the grid does not depend on
    point order and chunked counting sums to the same result.
    """
    arr = np.asarray(points)
    if arr.ndim != 2 or arr.shape[1] < 3:
        raise ParameterError(f"points must be (N, >=3), got shape {arr.shape}")
    if not np.isfinite(arr[:, :3]).all():
        raise ParameterError("voxelize needs finite point coordinates")
    flat = _flat_indices(arr, config)
    counts = np.bincount(flat, minlength=int(np.prod(config.dims)))
    logger.debug(f"voxelized {flat.size} of {arr.shape[0]} points into {np.count_nonzero(counts)} voxels")
    return VoxelGrid(config=config, density=counts.reshape(config.dims).astype(np.float64))


def normalize_density(grid: VoxelGrid, mode: DensityMode | str) -> VoxelGrid:
    """raw -> identity, log1p -> ln(1 + count), binary -> count > 0."""
    mode = DensityMode(mode)
    if grid.mode != DensityMode.RAW and mode != DensityMode.RAW:
        raise ParameterError(f"grid is already normalized ({grid.mode.value})")
    if mode == DensityMode.RAW:
        return grid
    if mode == DensityMode.LOG1P:
        density = np.log1p(grid.density)
    else:
        density = (grid.density > 0).astype(np.float64)
    return replace(grid, density=density, mode=mode)


def _mm(value: float) -> int:
    return int(round(value * 1000.0))


def write_grid(grid: VoxelGrid) -> bytes:
    """
    Layout: magic "VXG1", nine little-endian int32 (nx, ny, nz, then x/y/z
    min and max in millimeters), then float32 densities in [ix, iy, iz] order.
    """
    cfg = grid.config
    bounds = [_mm(v) for rng in cfg.ranges for v in rng]
    header = _HEADER.pack(GRID_MAGIC, *cfg.dims, *bounds)
    return header + np.ascontiguousarray(grid.density, dtype="<f4").tobytes()


def read_grid(data: bytes, mode: DensityMode | str = DensityMode.RAW) -> VoxelGrid:
    if len(data) < _HEADER.size:
        raise FormatError("voxel grid shorter than its header", offset=len(data))
    magic, nx, ny, nz, *bounds = _HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise FormatError(f"bad voxel grid magic {magic!r}", offset=0)
    expected = nx * ny * nz * 4
    if len(data) - _HEADER.size != expected:
        raise FormatError(
            f"voxel grid payload is {len(data) - _HEADER.size} bytes, expected {expected}",
            offset=_HEADER.size,
        )
    b = [v / 1000.0 for v in bounds]
    config = RoiConfig(x_range=(b[0], b[1]), y_range=(b[2], b[3]), z_range=(b[4], b[5]), dims=(nx, ny, nz))
    density = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(nx, ny, nz).astype(np.float64)
    return VoxelGrid(config=config, density=density, mode=DensityMode(mode))
