"""
Semi-supervised stereo depth losses with analytic gradients.

Terms: edge-aware smoothness, edge preservance and their blend (eps),
stereo reprojection through a differentiable horizontal warp, left/right
disparity consistency, SSIM appearance matching, the unsupervised total,
and the decaying sparse LiDAR supervision.

Every `*_and_grad` function returns the loss value together with its
gradient; the plain function returns the value only.

Warp convention: the right view is reconstructed from the left image
sampled at u + fb / D_l, the left view from the right image sampled at
u - fb / D_r.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy.ndimage import uniform_filter

from .box_geometry import ProjectedPoints
from .config import DepthLossWeights, EdgeVariant
from .errors import ParameterError
from .numerics import (
    DEFAULT_HUBER_DELTA,
    DepthMap,
    ImageGrid,
    as_grid,
    check_same_shape,
    huber,
    huber_grad,
    image_gradients,
    image_gradients_adjoint,
)

logger = logging.getLogger(__name__)

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
SSIM_WINDOW = 3
DEFAULT_CLAMP = (0.1, 100.0)


class WarpDirection(str, Enum):
    LEFT_TO_RIGHT = "left_to_right"
    RIGHT_TO_LEFT = "right_to_left"

    @property
    def sign(self) -> float:
        return 1.0 if self is WarpDirection.LEFT_TO_RIGHT else -1.0


@dataclass(frozen=True)
class EdgeParams:
    """Learnable scalars of alpha_0 = tanh(w0 gx + b0) and alpha_1 = tanh(w1 g + b1)."""

    w0: float = 0.0
    b0: float = 0.0
    w1: float = 0.0
    b1: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ParameterError(f"edge params must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.w0, self.b0, self.w1, self.b1], dtype=np.float64)

    @classmethod
    def from_array(cls, values: npt.ArrayLike) -> "EdgeParams":
        w0, b0, w1, b1 = (float(v) for v in np.asarray(values, dtype=np.float64).ravel())
        return cls(w0=w0, b0=b0, w1=w1, b1=b1)


@dataclass(frozen=True)
class StereoPair:
    left: ImageGrid
    right: ImageGrid
    focal: float
    baseline: float

    def __post_init__(self):
        if np.shape(self.left) != np.shape(self.right):
            raise ParameterError(f"stereo images differ in shape: {np.shape(self.left)} vs {np.shape(self.right)}")
        if not self.focal * self.baseline > 0:
            raise ParameterError(f"focal * baseline must be > 0, got {self.focal} * {self.baseline}")

    @property
    def fb(self) -> float:
        return self.focal * self.baseline

    @property
    def shape(self) -> tuple[int, int]:
        return np.shape(self.left)[:2]


def _channels(img: npt.ArrayLike) -> np.ndarray:
    arr = as_grid(img)
    return arr[..., None] if arr.ndim == 2 else arr


def _mean_image_gradients(img: npt.ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Signed forward differences of the channel-mean image."""
    return image_gradients(_channels(img).mean(axis=-1))


def _check_depth(depth: npt.ArrayLike, shape: tuple[int, ...], name: str) -> DepthMap:
    arr = np.asarray(depth, dtype=np.float64)
    if arr.shape != tuple(shape):
        raise ParameterError(f"{name}: shape {arr.shape} does not match image {tuple(shape)}")
    return arr


# ------------------------------------------------------------- smoothness

def loss_smooth_and_grad(depth: DepthMap, img: ImageGrid) -> tuple[float, np.ndarray]:
    """
    |dx D| exp(-|dx I|) averaged over the H x (W-1) horizontal stencil plus
    |dy D| exp(-|dy I|) averaged over the (H-1) x W vertical stencil.
    """
    gx_img, gy_img = _mean_image_gradients(img)
    depth = _check_depth(depth, gx_img.shape, "loss_smooth")
    h, w = depth.shape
    ddx, ddy = image_gradients(depth)
    wx = np.exp(-np.abs(gx_img))
    wy = np.exp(-np.abs(gy_img))
    nx, ny = h * (w - 1), (h - 1) * w
    value = np.sum(np.abs(ddx) * wx) / nx + np.sum(np.abs(ddy) * wy) / ny
    grad = image_gradients_adjoint(np.sign(ddx) * wx / nx, np.sign(ddy) * wy / ny)
    return float(value), grad


def loss_smooth(depth: DepthMap, img: ImageGrid) -> float:
    return loss_smooth_and_grad(depth, img)[0]


# ------------------------------------------------------- edge preservance

def edge_alphas(img: ImageGrid, params: EdgeParams, variant: EdgeVariant = EdgeVariant.DX_DY):
    gx, gy = _mean_image_gradients(img)
    g1 = gy if EdgeVariant(variant) is EdgeVariant.DX_DY else gx
    alpha0 = np.tanh(params.w0 * gx + params.b0)
    alpha1 = np.tanh(params.w1 * g1 + params.b1)
    return gx, gy, g1, alpha0, alpha1


def loss_edge_preservance_and_grad(
    depth: DepthMap,
    img: ImageGrid,
    params: EdgeParams,
    variant: EdgeVariant = EdgeVariant.DX_DY,
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Mean over all pixels of (exp|dx D - a0 dx I| + exp|dy D - a1 dy I|) / 2 - 1.
    Returns (value, d/d depth, d/d [w0, b0, w1, b1]).
    """
    gx, gy, g1, alpha0, alpha1 = edge_alphas(img, params, variant)
    depth = _check_depth(depth, gx.shape, "loss_edge_preservance")
    n = depth.size
    ddx, ddy = image_gradients(depth)
    rx = ddx - alpha0 * gx
    ry = ddy - alpha1 * gy
    ex, ey = np.exp(np.abs(rx)), np.exp(np.abs(ry))
    value = np.sum((ex + ey) / 2.0 - 1.0) / n

    d_rx = np.sign(rx) * ex / (2.0 * n)
    d_ry = np.sign(ry) * ey / (2.0 * n)
    grad_depth = image_gradients_adjoint(d_rx, d_ry)
    d_a0 = -d_rx * gx * (1.0 - alpha0**2)
    d_a1 = -d_ry * gy * (1.0 - alpha1**2)
    grad_params = np.array([np.sum(d_a0 * gx), np.sum(d_a0), np.sum(d_a1 * g1), np.sum(d_a1)])
    return float(value), grad_depth, grad_params


def loss_edge_preservance(
    depth: DepthMap,
    img: ImageGrid,
    params: EdgeParams,
    variant: EdgeVariant = EdgeVariant.DX_DY,
) -> float:
    return loss_edge_preservance_and_grad(depth, img, params, variant)[0]


def loss_eps_and_grad(
    depth: DepthMap,
    img: ImageGrid,
    params: EdgeParams,
    beta_edge: float,
    variant: EdgeVariant = EdgeVariant.DX_DY,
) -> tuple[float, np.ndarray, np.ndarray]:
    """beta_edge * edge preservance + (1 - beta_edge) * smoothness."""
    if not 0.0 <= beta_edge <= 1.0:
        raise ParameterError(f"beta_edge must lie in [0, 1], got {beta_edge}")
    ep, g_ep, g_params = loss_edge_preservance_and_grad(depth, img, params, variant)
    sm, g_sm = loss_smooth_and_grad(depth, img)
    value = beta_edge * ep + (1.0 - beta_edge) * sm
    return value, beta_edge * g_ep + (1.0 - beta_edge) * g_sm, beta_edge * g_params


def loss_eps(
    depth: DepthMap,
    img: ImageGrid,
    params: EdgeParams,
    beta_edge: float,
    variant: EdgeVariant = EdgeVariant.DX_DY,
) -> float:
    return loss_eps_and_grad(depth, img, params, beta_edge, variant)[0]


# ---------------------------------------------------------------- warping

def depth_to_disparity_and_grad(
    depth: DepthMap,
    focal: float,
    baseline: float,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
) -> tuple[np.ndarray, np.ndarray]:
    fb = focal * baseline
    if not fb > 0:
        raise ParameterError(f"focal * baseline must be > 0, got {fb}")
    lo, hi = clamp
    d = np.asarray(depth, dtype=np.float64)
    clamped = np.clip(d, lo, hi)
    disparity = fb / clamped
    # clamp saturates outside (lo, hi)
    grad = np.where((d > lo) & (d < hi), -fb / (clamped * clamped), 0.0)
    return disparity, grad


def depth_to_disparity(
    depth: DepthMap,
    focal: float,
    baseline: float,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
) -> ImageGrid:
    """fb / clamp(depth, min, max)."""
    return depth_to_disparity_and_grad(depth, focal, baseline, clamp)[0]


def _warp_sample(src: np.ndarray, disparity: np.ndarray, direction: WarpDirection):
    """
    Linear sampling of `src` (H, W, C) along rows at u + sign * disparity.
    Returns (warped, mask, d warped / d disparity); samples outside
    [0, W-1] read the clamped edge and carry mask 0 and zero slope.
    """
    h, w = disparity.shape
    sign = WarpDirection(direction).sign
    x = np.arange(w, dtype=np.float64)[None, :] + sign * disparity
    inside = (x >= 0.0) & (x <= w - 1)
    xc = np.clip(x, 0.0, w - 1)
    x0 = np.floor(xc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    frac = (xc - x0)[..., None]
    rows = np.arange(h)[:, None]
    a = src[rows, x0]
    b = src[rows, x1]
    warped = a * (1.0 - frac) + b * frac
    slope = sign * (b - a) * inside[..., None]
    return warped, inside.astype(np.float64), slope


def warp_image(src: ImageGrid, disparity: ImageGrid, direction: WarpDirection | str):
    """
    Warp `src` horizontally by `disparity`: left_to_right samples src at
    u + d, right_to_left at u - d. Returns (warped, mask) with mask 1 where
    the sample lies inside the source.
    """
    arr = as_grid(src, "src")
    disp = np.asarray(disparity, dtype=np.float64)
    if disp.shape != arr.shape[:2]:
        raise ParameterError(f"warp_image: disparity {disp.shape} does not match image {arr.shape[:2]}")
    warped, mask, _ = _warp_sample(_channels(arr), disp, WarpDirection(direction))
    if arr.ndim == 2:
        warped = warped[..., 0]
    return warped, mask


@dataclass(frozen=True)
class _Reconstruction:
    """One warped view with what its backward pass needs."""

    target: np.ndarray  # (H, W, C) real view
    warped: np.ndarray  # (H, W, C) reconstruction
    mask: np.ndarray  # (H, W)
    slope: np.ndarray  # (H, W, C) d warped / d disparity
    ddisp: np.ndarray  # (H, W) d disparity / d depth
    side: str  # which depth drives it: "left" or "right"

    def backprop(self, grad_warped: np.ndarray) -> np.ndarray:
        return np.sum(grad_warped * self.slope, axis=-1) * self.ddisp


def _reconstruct(target, src, depth, fb, clamp, direction, side) -> _Reconstruction:
    disp, ddisp = depth_to_disparity_and_grad(depth, fb, 1.0, clamp)
    warped, mask, slope = _warp_sample(src, disp, direction)
    return _Reconstruction(target=target, warped=warped, mask=mask, slope=slope, ddisp=ddisp, side=side)


def _reconstructions(pair: StereoPair, depth_l, depth_r, clamp, cross: bool) -> list[_Reconstruction]:
    left, right = _channels(pair.left), _channels(pair.right)
    shape = left.shape[:2]
    depth_l = _check_depth(depth_l, shape, "depth_l")
    depth_r = _check_depth(depth_r, shape, "depth_r")
    fb = pair.fb
    views = [
        _reconstruct(right, left, depth_l, fb, clamp, WarpDirection.LEFT_TO_RIGHT, "left"),
        _reconstruct(left, right, depth_r, fb, clamp, WarpDirection.RIGHT_TO_LEFT, "right"),
    ]
    if cross:
        views += [
            _reconstruct(left, right, depth_l, fb, clamp, WarpDirection.RIGHT_TO_LEFT, "left"),
            _reconstruct(right, left, depth_r, fb, clamp, WarpDirection.LEFT_TO_RIGHT, "right"),
        ]
    return views


def _repr_from_views(views: list[_Reconstruction], delta: float, shape) -> tuple[float, np.ndarray, np.ndarray]:
    grads = {"left": np.zeros(shape), "right": np.zeros(shape)}
    total = 0.0
    for view in views:
        r = view.warped - view.target
        n = r.size
        m = view.mask[..., None]
        total += float(np.sum(m * huber(r, delta))) / n
        grads[view.side] += view.backprop(m * huber_grad(r, delta) / n)
    k = len(views)
    return total / k, grads["left"] / k, grads["right"] / k


# ----------------------------------------------------------- reprojection

def loss_reprojection_and_grad(
    pair: StereoPair,
    depth_l: DepthMap,
    depth_r: DepthMap,
    delta: float = DEFAULT_HUBER_DELTA,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
    cross: bool = False,
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Average over the reconstructed views of the masked Huber photometric
    residual, normalized by all pixels times channels. With `cross` the two
    left/right cross reconstructions are averaged in as well.
    Returns (value, d/d depth_l, d/d depth_r).
    """
    views = _reconstructions(pair, depth_l, depth_r, clamp, cross)
    return _repr_from_views(views, delta, pair.shape)


def loss_reprojection(
    pair: StereoPair,
    depth_l: DepthMap,
    depth_r: DepthMap,
    delta: float = DEFAULT_HUBER_DELTA,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
    cross: bool = False,
) -> float:
    return loss_reprojection_and_grad(pair, depth_l, depth_r, delta, clamp, cross)[0]


# ------------------------------------------------------------ consistency

def loss_disp_consistency_and_grad(
    disp_l2r: ImageGrid,
    disp_r2l: ImageGrid,
    delta: float = DEFAULT_HUBER_DELTA,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean Huber(disp_l2r + disp_r2l); disp_r2l carries the negative sign."""
    a = np.asarray(disp_l2r, dtype=np.float64)
    b = np.asarray(disp_r2l, dtype=np.float64)
    check_same_shape(a, b, "loss_disp_consistency")
    r = a + b
    g = huber_grad(r, delta) / r.size
    return float(np.mean(huber(r, delta))), g, g.copy()


def loss_disp_consistency(disp_l2r: ImageGrid, disp_r2l: ImageGrid, delta: float = DEFAULT_HUBER_DELTA) -> float:
    return loss_disp_consistency_and_grad(disp_l2r, disp_r2l, delta)[0]


def _consistency_from_depths(pair: StereoPair, depth_l, depth_r, delta, clamp):
    disp_l2r, dl = depth_to_disparity_and_grad(depth_l, pair.focal, pair.baseline, clamp)
    disp_r, dr = depth_to_disparity_and_grad(depth_r, pair.focal, pair.baseline, clamp)
    value, g_l2r, g_r2l = loss_disp_consistency_and_grad(disp_l2r, -disp_r, delta)
    return value, g_l2r * dl, -g_r2l * dr


# ------------------------------------------------------------------- SSIM

def _window_mean(x: np.ndarray) -> np.ndarray:
    """3 x 3 box mean per channel with zero padding (always divides by 9)."""
    return uniform_filter(x, size=(SSIM_WINDOW, SSIM_WINDOW, 1), mode="constant", cval=0.0)


def _ssim_parts(a: np.ndarray, b: np.ndarray):
    mu_a, mu_b = _window_mean(a), _window_mean(b)
    var_a = _window_mean(a * a) - mu_a * mu_a
    var_b = _window_mean(b * b) - mu_b * mu_b
    cov = _window_mean(a * b) - mu_a * mu_b
    a1 = 2.0 * mu_a * mu_b + SSIM_C1
    a2 = 2.0 * cov + SSIM_C2
    b1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1
    b2 = var_a + var_b + SSIM_C2
    s = (a1 * a2) / (b1 * b2)
    return s, (mu_a, mu_b, a1, a2, b1, b2)


def ssim(a: ImageGrid, b: ImageGrid) -> ImageGrid:
    """Per-pixel (per-channel) SSIM over a 3 x 3 uniform window, C1 = 0.01^2, C2 = 0.03^2."""
    a_arr, b_arr = as_grid(a, "a"), as_grid(b, "b")
    check_same_shape(a_arr, b_arr, "ssim")
    s, _ = _ssim_parts(_channels(a_arr), _channels(b_arr))
    return s[..., 0] if a_arr.ndim == 2 else s


def _ssim_backprop_b(a: np.ndarray, b: np.ndarray, s: np.ndarray, parts, grad_s: np.ndarray) -> np.ndarray:
    """d/db of sum(grad_s * SSIM(a, b)); the zero-padded box window is self-adjoint."""
    mu_a, mu_b, a1, a2, b1, b2 = parts
    d_mu_b = s * (2.0 * mu_a / a1 - 2.0 * mu_a / a2 - 2.0 * mu_b / b1 + 2.0 * mu_b / b2)
    d_m_ab = s * (2.0 / a2)
    d_m_bb = -s / b2
    return (
        _window_mean(grad_s * d_mu_b)
        + a * _window_mean(grad_s * d_m_ab)
        + 2.0 * b * _window_mean(grad_s * d_m_bb)
    )


def _ssim_term_from_views(views: list[_Reconstruction], shape) -> tuple[float, np.ndarray, np.ndarray]:
    """mean (2 - [SSIM(I_l, ~I_l) + SSIM(I_r, ~I_r)]) / 4 over the two primary views."""
    grads = {"left": np.zeros(shape), "right": np.zeros(shape)}
    total = 0.0
    for view in views[:2]:
        s, parts = _ssim_parts(view.target, view.warped)
        n = s.size
        total += float(np.sum(1.0 - s)) / (4.0 * n)
        grad_s = np.full_like(s, -1.0 / (4.0 * n))
        grads[view.side] += view.backprop(_ssim_backprop_b(view.target, view.warped, s, parts, grad_s))
    return total, grads["left"], grads["right"]


def loss_ssim_and_grad(
    pair: StereoPair,
    depth_l: DepthMap,
    depth_r: DepthMap,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
) -> tuple[float, np.ndarray, np.ndarray]:
    views = _reconstructions(pair, depth_l, depth_r, clamp, cross=False)
    return _ssim_term_from_views(views, pair.shape)


def loss_ssim(pair: StereoPair, depth_l: DepthMap, depth_r: DepthMap, clamp: tuple[float, float] = DEFAULT_CLAMP) -> float:
    return loss_ssim_and_grad(pair, depth_l, depth_r, clamp)[0]


def loss_appearance_and_grad(
    pair: StereoPair,
    depth_l: DepthMap,
    depth_r: DepthMap,
    alpha_ssim: float = 0.85,
    delta: float = DEFAULT_HUBER_DELTA,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
    cross: bool = False,
) -> tuple[float, np.ndarray, np.ndarray]:
    """alpha_ssim * L_ssim + (1 - alpha_ssim) * L_repr."""
    if not 0.0 <= alpha_ssim <= 1.0:
        raise ParameterError(f"alpha_ssim must lie in [0, 1], got {alpha_ssim}")
    views = _reconstructions(pair, depth_l, depth_r, clamp, cross)
    s_val, s_l, s_r = _ssim_term_from_views(views, pair.shape)
    r_val, r_l, r_r = _repr_from_views(views, delta, pair.shape)
    value = alpha_ssim * s_val + (1.0 - alpha_ssim) * r_val
    return value, alpha_ssim * s_l + (1.0 - alpha_ssim) * r_l, alpha_ssim * s_r + (1.0 - alpha_ssim) * r_r


def loss_appearance(
    pair: StereoPair,
    depth_l: DepthMap,
    depth_r: DepthMap,
    alpha_ssim: float = 0.85,
    delta: float = DEFAULT_HUBER_DELTA,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
    cross: bool = False,
) -> float:
    return loss_appearance_and_grad(pair, depth_l, depth_r, alpha_ssim, delta, clamp, cross)[0]


# ------------------------------------------------------------------ totals

@dataclass(frozen=True)
class DepthLossReport:
    eps: float
    reprojection: float
    consistency: float
    appearance: float
    total: float
    grad_depth_l: np.ndarray
    grad_depth_r: np.ndarray
    grad_params: np.ndarray  # d/d [w0, b0, w1, b1]

    def terms(self) -> dict[str, float]:
        return {
            "eps": self.eps,
            "reprojection": self.reprojection,
            "consistency": self.consistency,
            "appearance": self.appearance,
            "total": self.total,
        }


def loss_depth_unsup(
    pair: StereoPair,
    depth_l: DepthMap,
    depth_r: DepthMap,
    img_l: Optional[ImageGrid] = None,
    params: Optional[EdgeParams] = None,
    weights: Optional[DepthLossWeights] = None,
) -> DepthLossReport:
    """
    lambda_eps * L_eps + lambda_repr * L_repr + lambda_cons * L_cons + lambda_app * L_app,
    with L_eps regularizing the left depth against `img_l` (the left image by default).
    """
    weights = weights or DepthLossWeights()
    params = params or EdgeParams()
    img_l = pair.left if img_l is None else img_l
    shape = pair.shape
    clamp, delta = weights.depth_clamp, weights.huber_delta

    eps, g_eps, g_params = loss_eps_and_grad(depth_l, img_l, params, weights.beta_edge, weights.edge_variant)
    views = _reconstructions(pair, depth_l, depth_r, clamp, weights.cross_reprojection)
    rep, rep_l, rep_r = _repr_from_views(views, delta, shape)
    cons, cons_l, cons_r = _consistency_from_depths(pair, depth_l, depth_r, delta, clamp)
    ssim_val, ssim_l, ssim_r = _ssim_term_from_views(views, shape)
    a = weights.alpha_ssim
    app = a * ssim_val + (1.0 - a) * rep

    lam_app_repr = weights.lambda_repr + weights.lambda_app * (1.0 - a)
    total = weights.lambda_eps * eps + weights.lambda_repr * rep + weights.lambda_cons * cons + weights.lambda_app * app
    grad_l = (
        weights.lambda_eps * g_eps
        + lam_app_repr * rep_l
        + weights.lambda_cons * cons_l
        + weights.lambda_app * a * ssim_l
    )
    grad_r = lam_app_repr * rep_r + weights.lambda_cons * cons_r + weights.lambda_app * a * ssim_r
    return DepthLossReport(
        eps=eps,
        reprojection=rep,
        consistency=cons,
        appearance=app,
        total=float(total),
        grad_depth_l=grad_l,
        grad_depth_r=grad_r,
        grad_params=weights.lambda_eps * g_params,
    )


def sup_weight(lambda_sup: float, epoch: int, decay_rate: float) -> float:
    return lambda_sup * math.exp(-decay_rate * epoch)


def loss_depth_sup_and_grad(
    depth_l: DepthMap,
    projected: ProjectedPoints,
    lambda_sup: float,
    epoch: int = 0,
    decay_rate: float = 0.01,
) -> tuple[float, np.ndarray]:
    """
    lambda_sup * exp(-decay_rate * epoch) * mean squared error between the
    projected LiDAR depths and the prediction at (floor(v), floor(u)).
    """
    if lambda_sup < 0:
        raise ParameterError(f"lambda_sup must be >= 0, got {lambda_sup}")
    depth = np.asarray(depth_l, dtype=np.float64)
    grad = np.zeros_like(depth)
    k = len(projected)
    if k == 0:
        return 0.0, grad
    rows, cols = projected.rows, projected.cols
    h, w = depth.shape
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= h or cols.max() >= w:
        raise ParameterError(f"projected points fall outside the {h}x{w} depth map")
    weight = sup_weight(lambda_sup, epoch, decay_rate)
    r = depth[rows, cols] - projected.depth
    np.add.at(grad, (rows, cols), 2.0 * weight * r / k)
    return float(weight * np.mean(r * r)), grad


def loss_depth_sup(
    depth_l: DepthMap,
    projected: ProjectedPoints,
    lambda_sup: float,
    epoch: int = 0,
    decay_rate: float = 0.01,
) -> float:
    return loss_depth_sup_and_grad(depth_l, projected, lambda_sup, epoch, decay_rate)[0]
