"""
Dense grid and scalar utilities shared by every kernel module.

Images are numpy float64 arrays shaped (H, W) for single-channel grids
(depth, disparity, masks) or (H, W, C) for multi-channel images.
"""
import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt

from .errors import OracleError, ParameterError

logger = logging.getLogger(__name__)

ImageGrid = npt.NDArray[np.float64]
DepthMap = npt.NDArray[np.float64]
ArrayLike = Union[float, npt.ArrayLike]

DEFAULT_HUBER_DELTA = 1.0
DEFAULT_FD_EPS = 1e-4


def as_grid(img: npt.ArrayLike, name: str = "image") -> ImageGrid:
    """Coerce to a float64 grid of rank 2 or 3."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ParameterError(f"{name} must be (H, W) or (H, W, C), got shape {arr.shape}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ParameterError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def huber(residual: ArrayLike, delta: float = DEFAULT_HUBER_DELTA) -> Union[float, np.ndarray]:
    """0.5 r^2 inside |r| <= delta, delta (|r| - delta/2) outside. Elementwise."""
    if not delta > 0:
        raise ParameterError(f"huber delta must be > 0, got {delta}")
    r = np.asarray(residual, dtype=np.float64)
    a = np.abs(r)
    out = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def huber_grad(residual: ArrayLike, delta: float = DEFAULT_HUBER_DELTA) -> Union[float, np.ndarray]:
    """Derivative of `huber` with respect to the residual."""
    if not delta > 0:
        raise ParameterError(f"huber delta must be > 0, got {delta}")
    out = np.clip(np.asarray(residual, dtype=np.float64), -delta, delta)
    return float(out) if out.ndim == 0 else out


def image_gradients(img: npt.ArrayLike) -> tuple[ImageGrid, ImageGrid]:
    """
    Forward differences (dx, dy) with the last column of dx and the last
    row of dy set to zero, so both outputs keep the input shape.
    """
    arr = as_grid(img)
    h, w = arr.shape[:2]
    if h < 2 or w < 2:
        raise ParameterError(f"image_gradients needs at least 2x2 pixels, got {h}x{w}")
    dx = np.zeros_like(arr)
    dy = np.zeros_like(arr)
    dx[:, :-1] = arr[:, 1:] - arr[:, :-1]
    dy[:-1, :] = arr[1:, :] - arr[:-1, :]
    return dx, dy


def image_gradients_adjoint(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """
    Transpose of `image_gradients`: given dL/d(dx) and dL/d(dy), return dL/d(img).
    Entries of gx in the last column and of gy in the last row are ignored.
    """
    out = np.zeros_like(gx)
    out[:, 1:] += gx[:, :-1]
    out[:, :-1] -= gx[:, :-1]
    out[1:, :] += gy[:-1, :]
    out[:-1, :] -= gy[:-1, :]
    return out


def resize_nearest(img: npt.ArrayLike, new_h: int, new_w: int) -> ImageGrid:
    """Nearest-neighbour resize; source index = floor(i * h / new_h)."""
    if new_h < 1 or new_w < 1:
        raise ParameterError(f"resize target must be >= 1x1, got {new_h}x{new_w}")
    arr = as_grid(img)
    h, w = arr.shape[:2]
    rows = (np.arange(new_h) * h) // new_h
    cols = (np.arange(new_w) * w) // new_w
    return arr[rows[:, None], cols[None, :]]


def finite_diff_gradient(
    f: Callable[[np.ndarray], float],
    x: npt.ArrayLike,
    eps: float = DEFAULT_FD_EPS,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Central-difference gradient of a scalar function of a flat vector.

    Only the coordinates in `indices` are probed when given; the others
    are left at zero in the returned vector.
    """
    if not eps > 0:
        raise ParameterError(f"finite-difference eps must be > 0, got {eps}")
    x0 = np.array(x, dtype=np.float64).ravel()
    grad = np.zeros_like(x0)
    probe = range(x0.size) if indices is None else indices
    probe_x = x0.copy()
    for j in probe:
        probe_x[j] = x0[j] + eps
        f_plus = float(f(probe_x))
        probe_x[j] = x0[j] - eps
        f_minus = float(f(probe_x))
        probe_x[j] = x0[j]
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise OracleError(f"non-finite function value while probing coordinate {j}", coordinate=j)
        grad[j] = (f_plus - f_minus) / (2.0 * eps)
    logger.debug(f"finite_diff_gradient probed {len(probe)} of {x0.size} coordinates")
    return grad


def relative_error(analytic: npt.ArrayLike, numeric: npt.ArrayLike) -> np.ndarray:
    """|a - n| / max(1, |a|), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1.0, np.abs(a))
