"""
Certification of every analytic loss gradient against central finite
differences on random inputs drawn away from kinks.

A case is a name plus a sampler. The sampler turns a random generator
into a Problem: a flat input vector, a value-and-gradient function of
that vector, and the coordinates that must always be probed.
"""
import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .box_geometry import ProjectedPoints
from .config import DepthLossWeights, DetLossWeights, EdgeVariant
from .depth_losses import (
    EdgeParams,
    StereoPair,
    edge_alphas,
    loss_appearance_and_grad,
    loss_depth_sup_and_grad,
    loss_depth_unsup,
    loss_disp_consistency_and_grad,
    loss_edge_preservance_and_grad,
    loss_eps_and_grad,
    loss_reprojection_and_grad,
    loss_smooth_and_grad,
)
from .detection_codec import CLASS_OFFSET, TargetTensor
from .detection_losses import (
    loss_class_and_grad,
    loss_conf_and_grad,
    loss_detection_total,
    loss_pose_and_grad,
)
from .errors import ParameterError
from .numerics import DEFAULT_FD_EPS, finite_diff_gradient, image_gradients, relative_error

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4
DEFAULT_INPUTS = 50
DEFAULT_PROBES = 8
KINK_MARGIN = 1e-3
MAX_RESAMPLES = 200

DEPTH_SHAPE = (8, 10)
GRID_CELLS = 6
N_CLASSES = 3
FOCAL, BASELINE = 10.0, 0.5  # fb = 5, disparities 0.6..2.5 px for depths in [2, 8]


@dataclass(frozen=True)
class Problem:
    x: np.ndarray
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]]
    always: tuple[int, ...] = ()


Sampler = Callable[[np.random.Generator], Problem]


@dataclass(frozen=True)
class CertificationResult:
    name: str
    n_inputs: int
    max_rel_error: float
    passed: bool
    seconds: float = 0.0


def certify(
    name: str,
    sampler: Sampler,
    n_inputs: int = DEFAULT_INPUTS,
    probes: int = DEFAULT_PROBES,
    rng: np.random.Generator | None = None,
    eps: float = DEFAULT_FD_EPS,
    tol: float = DEFAULT_TOLERANCE,
) -> CertificationResult:
    """Max over inputs and probed coordinates of |a - n| / max(1, |a|)."""
    rng = rng or np.random.default_rng(0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(n_inputs):
        problem = sampler(rng)
        _, analytic = problem.value_and_grad(problem.x)
        size = problem.x.size
        chosen = rng.choice(size, size=min(probes, size), replace=False)
        indices = sorted(set(int(i) for i in chosen) | set(problem.always))
        numeric = finite_diff_gradient(lambda x: problem.value_and_grad(x)[0], problem.x, eps=eps, indices=indices)
        err = float(relative_error(analytic[indices], numeric[indices]).max())
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    result = CertificationResult(name=name, n_inputs=n_inputs, max_rel_error=worst, passed=worst < tol, seconds=elapsed)
    logger.info(f"certified {name}: max relative error {worst:.3e} over {n_inputs} inputs")
    return result


# ----------------------------------------------------------------- samplers

def _resample(draw: Callable[[], tuple], ok: Callable[..., bool]) -> tuple:
    for _ in range(MAX_RESAMPLES):
        values = draw()
        if ok(*values):
            return values
    raise ParameterError(f"could not draw a kink-free input in {MAX_RESAMPLES} attempts")


def _tensor_pair(rng: np.random.Generator) -> tuple[np.ndarray, TargetTensor]:
    channels = CLASS_OFFSET + N_CLASSES
    gt = np.zeros((GRID_CELLS, GRID_CELLS, channels))
    occupied = rng.random((GRID_CELLS, GRID_CELLS)) < 0.3
    occupied[rng.integers(GRID_CELLS), rng.integers(GRID_CELLS)] = True
    gt[..., 0] = occupied
    gt[..., 1:9] = rng.normal(size=(GRID_CELLS, GRID_CELLS, 8)) * occupied[..., None]
    classes = rng.integers(N_CLASSES, size=(GRID_CELLS, GRID_CELLS))
    for c in range(N_CLASSES):
        gt[..., CLASS_OFFSET + c] = occupied & (classes == c)
    pred = rng.normal(size=gt.shape)
    return pred.ravel(), TargetTensor(gt, N_CLASSES)


def _tensor_problem(loss: Callable[[TargetTensor, TargetTensor], tuple[float, np.ndarray]]) -> Sampler:
    def sampler(rng: np.random.Generator) -> Problem:
        x, gt = _tensor_pair(rng)
        shape = gt.grid.shape

        def value_and_grad(v: np.ndarray) -> tuple[float, np.ndarray]:
            value, grad = loss(TargetTensor(v.reshape(shape), N_CLASSES), gt)
            return value, grad.ravel()

        return Problem(x=x, value_and_grad=value_and_grad)

    return sampler


def _det_total(pred: TargetTensor, gt: TargetTensor) -> tuple[float, np.ndarray]:
    report = loss_detection_total(pred, gt, DetLossWeights(lambda_conf=0.7, lambda_pose=1.3, lambda_class=0.9, lambda_giou=0.0))
    return report.total, report.gradient


def _image(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(*DEPTH_SHAPE, 3))


def _depth(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(2.0, 8.0, size=DEPTH_SHAPE)


def _stencil_ok(depth: np.ndarray) -> bool:
    dx, dy = image_gradients(depth)
    return np.abs(dx[:, :-1]).min() >= KINK_MARGIN and np.abs(dy[:-1, :]).min() >= KINK_MARGIN


def _edge_ok(depth, img, params, variant) -> bool:
    gx, gy, _, a0, a1 = edge_alphas(img, params, variant)
    dx, dy = image_gradients(depth)
    rx, ry = dx - a0 * gx, dy - a1 * gy
    return np.abs(rx[:, :-1]).min() >= KINK_MARGIN and np.abs(ry[:-1, :]).min() >= KINK_MARGIN


def _samples_ok(depth: np.ndarray, sign: float) -> bool:
    """Warp sample positions stay clear of the integer lattice."""
    x = np.arange(depth.shape[1])[None, :] + sign * (FOCAL * BASELINE) / depth
    return np.abs(x - np.round(x)).min() >= KINK_MARGIN


def _pair(rng: np.random.Generator) -> StereoPair:
    return StereoPair(left=_image(rng), right=_image(rng), focal=FOCAL, baseline=BASELINE)


def _warp_ok(depth_l: np.ndarray, depth_r: np.ndarray, cross: bool) -> bool:
    ok = _samples_ok(depth_l, 1.0) and _samples_ok(depth_r, -1.0)
    if cross:
        ok = ok and _samples_ok(depth_l, -1.0) and _samples_ok(depth_r, 1.0)
    return ok


def _split2(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = DEPTH_SHAPE[0] * DEPTH_SHAPE[1]
    return v[:n].reshape(DEPTH_SHAPE), v[n : 2 * n].reshape(DEPTH_SHAPE)


def _smooth_sampler(rng: np.random.Generator) -> Problem:
    img = _image(rng)
    (depth,) = _resample(lambda: (_depth(rng),), _stencil_ok)

    def value_and_grad(v):
        value, grad = loss_smooth_and_grad(v.reshape(DEPTH_SHAPE), img)
        return value, grad.ravel()

    return Problem(x=depth.ravel(), value_and_grad=value_and_grad)


def _edge_sampler(beta_edge: float | None) -> Sampler:
    """Edge preservance alone (beta_edge None) or the eps blend, over depth and params."""

    def sampler(rng: np.random.Generator) -> Problem:
        img = _image(rng)
        variant = EdgeVariant.DX_DY if rng.random() < 0.5 else EdgeVariant.DX_DX

        def draw():
            return _depth(rng), EdgeParams.from_array(rng.normal(0.0, 0.7, size=4))

        def ok(depth, params):
            good = _edge_ok(depth, img, params, variant)
            return good and (beta_edge is None or _stencil_ok(depth))

        depth, params = _resample(draw, ok)
        n = depth.size

        def value_and_grad(v):
            d, p = v[:n].reshape(DEPTH_SHAPE), EdgeParams.from_array(v[n:])
            if beta_edge is None:
                value, g_d, g_p = loss_edge_preservance_and_grad(d, img, p, variant)
            else:
                value, g_d, g_p = loss_eps_and_grad(d, img, p, beta_edge, variant)
            return value, np.concatenate([g_d.ravel(), g_p])

        x = np.concatenate([depth.ravel(), params.as_array()])
        return Problem(x=x, value_and_grad=value_and_grad, always=tuple(range(n, n + 4)))

    return sampler


def _stereo_sampler(loss: Callable, cross: bool) -> Sampler:
    def sampler(rng: np.random.Generator) -> Problem:
        pair = _pair(rng)
        depth_l, depth_r = _resample(lambda: (_depth(rng), _depth(rng)), lambda a, b: _warp_ok(a, b, cross))

        def value_and_grad(v):
            value, g_l, g_r = loss(pair, *_split2(v))
            return value, np.concatenate([g_l.ravel(), g_r.ravel()])

        return Problem(x=np.concatenate([depth_l.ravel(), depth_r.ravel()]), value_and_grad=value_and_grad)

    return sampler


def _consistency_sampler(rng: np.random.Generator) -> Problem:
    disp_l2r = rng.uniform(0.5, 3.0, size=DEPTH_SHAPE)
    disp_r2l = -disp_l2r + rng.normal(0.0, 1.0, size=DEPTH_SHAPE)

    def value_and_grad(v):
        value, g_a, g_b = loss_disp_consistency_and_grad(*_split2(v), delta=1.0)
        return value, np.concatenate([g_a.ravel(), g_b.ravel()])

    return Problem(x=np.concatenate([disp_l2r.ravel(), disp_r2l.ravel()]), value_and_grad=value_and_grad)


def _unsup_sampler(rng: np.random.Generator) -> Problem:
    pair = _pair(rng)
    variant = EdgeVariant.DX_DY if rng.random() < 0.5 else EdgeVariant.DX_DX
    weights = DepthLossWeights(
        lambda_eps=0.8,
        lambda_repr=1.1,
        lambda_cons=0.6,
        lambda_app=1.4,
        cross_reprojection=bool(rng.random() < 0.5),
        edge_variant=variant,
    )

    def draw():
        return _depth(rng), _depth(rng), EdgeParams.from_array(rng.normal(0.0, 0.7, size=4))

    def ok(depth_l, depth_r, params):
        return (
            _warp_ok(depth_l, depth_r, weights.cross_reprojection)
            and _stencil_ok(depth_l)
            and _edge_ok(depth_l, pair.left, params, variant)
        )

    depth_l, depth_r, params = _resample(draw, ok)
    n = depth_l.size

    def value_and_grad(v):
        d_l, d_r = _split2(v)
        report = loss_depth_unsup(pair, d_l, d_r, params=EdgeParams.from_array(v[2 * n :]), weights=weights)
        grad = np.concatenate([report.grad_depth_l.ravel(), report.grad_depth_r.ravel(), report.grad_params])
        return report.total, grad

    x = np.concatenate([depth_l.ravel(), depth_r.ravel(), params.as_array()])
    return Problem(x=x, value_and_grad=value_and_grad, always=tuple(range(2 * n, 2 * n + 4)))


def _sup_sampler(rng: np.random.Generator) -> Problem:
    h, w = DEPTH_SHAPE
    depth = _depth(rng)
    pixels = rng.choice(h * w, size=12, replace=False)
    rows, cols = np.divmod(pixels, w)
    projected = ProjectedPoints(
        u=cols + rng.uniform(0.0, 1.0, size=cols.size),
        v=rows + rng.uniform(0.0, 1.0, size=rows.size),
        depth=rng.uniform(2.0, 8.0, size=rows.size),
    )
    epoch = int(rng.integers(0, 20))

    def value_and_grad(v):
        value, grad = loss_depth_sup_and_grad(v.reshape(DEPTH_SHAPE), projected, 1.3, epoch, 0.01)
        return value, grad.ravel()

    # always probe the sampled pixels so the check is not vacuous
    return Problem(x=depth.ravel(), value_and_grad=value_and_grad, always=tuple(int(p) for p in pixels[:4]))


def _app(pair, d_l, d_r):
    return loss_appearance_and_grad(pair, d_l, d_r, alpha_ssim=0.85, delta=1.0)


def _repr(pair, d_l, d_r):
    return loss_reprojection_and_grad(pair, d_l, d_r, delta=1.0)


CASES: tuple[tuple[str, Sampler], ...] = (
    ("pose", _tensor_problem(lambda p, g: loss_pose_and_grad(p, g, 1e-6))),
    ("conf", _tensor_problem(lambda p, g: loss_conf_and_grad(p, g, 1e-6))),
    ("class", _tensor_problem(loss_class_and_grad)),
    ("detection_total", _tensor_problem(_det_total)),
    ("smooth", _smooth_sampler),
    ("edge_preservance", _edge_sampler(None)),
    ("eps", _edge_sampler(0.5)),
    ("reprojection", _stereo_sampler(_repr, cross=False)),
    ("consistency", _consistency_sampler),
    ("appearance", _stereo_sampler(_app, cross=False)),
    ("depth_unsup", _unsup_sampler),
    ("depth_sup", _sup_sampler),
)


def run_suite(
    seed: int = 0,
    n_inputs: int = DEFAULT_INPUTS,
    probes: int = DEFAULT_PROBES,
    names: Sequence[str] | None = None,
    tol: float = DEFAULT_TOLERANCE,
) -> list[CertificationResult]:
    """Run every case (or the named ones); each case draws from its own seeded stream."""
    known = [name for name, _ in CASES]
    if names:
        unknown = sorted(set(names) - set(known))
        if unknown:
            raise ParameterError(f"unknown gradcheck case(s) {unknown}, expected some of {known}")
    results = []
    for index, (name, sampler) in enumerate(CASES):
        if names and name not in names:
            continue
        rng = np.random.default_rng([seed, index])
        results.append(certify(name, sampler, n_inputs=n_inputs, probes=probes, rng=rng, tol=tol))
    return results
