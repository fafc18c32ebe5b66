import math

import numpy as np
import pytest

from vr3dense.box_geometry import ProjectedPoints
from vr3dense.config import DepthLossWeights, EdgeVariant
from vr3dense.depth_fit import TOY_WEIGHTS
from vr3dense.depth_losses import (
    EdgeParams,
    StereoPair,
    WarpDirection,
    depth_to_disparity,
    loss_appearance,
    loss_depth_sup,
    loss_depth_sup_and_grad,
    loss_depth_unsup,
    loss_disp_consistency,
    loss_edge_preservance,
    loss_eps,
    loss_reprojection,
    loss_smooth,
    loss_ssim,
    ssim,
    warp_image,
)
from vr3dense.errors import ParameterError

H, W = 8, 12
EDGE_INTEGRAND = (math.e + 1.0) / 2.0 - 1.0


def _x_ramp(slope: float, h: int = H, w: int = W) -> np.ndarray:
    return np.tile(np.arange(w, dtype=float) * slope, (h, 1))


class TestDisparity:
    def test_division(self):
        np.testing.assert_allclose(depth_to_disparity(np.full((2, 2), 50.0), 100.0, 1.0), 2.0)

    def test_clamped_at_max(self):
        np.testing.assert_allclose(depth_to_disparity(np.array([[100.0, 400.0]]), 100.0, 1.0), 1.0)

    def test_inverse(self, rng):
        depth = rng.uniform(1.0, 90.0, size=(3, 4))
        disparity = depth_to_disparity(depth, 100.0, 1.0)
        np.testing.assert_allclose(100.0 / disparity, depth)

    def test_non_positive_fb(self):
        with pytest.raises(ParameterError):
            depth_to_disparity(np.ones((2, 2)), 100.0, 0.0)


class TestWarp:
    def test_zero_disparity_is_identity(self, rng):
        src = rng.uniform(size=(H, W, 3))
        warped, mask = warp_image(src, np.zeros((H, W)), WarpDirection.LEFT_TO_RIGHT)
        np.testing.assert_array_equal(warped, src)
        assert mask.all()

    def test_integer_shift(self):
        ramp = _x_ramp(1.0)
        warped, mask = warp_image(ramp, np.ones((H, W)), "left_to_right")
        np.testing.assert_allclose(warped[:, :-1], ramp[:, 1:])
        assert not mask[:, -1].any()
        assert mask[:, :-1].all()

    def test_half_pixel_interpolates(self):
        ramp = _x_ramp(1.0)
        warped, mask = warp_image(ramp, np.full((H, W), 0.5), "left_to_right")
        np.testing.assert_allclose(warped[:, :-1], ramp[:, :-1] + 0.5)
        assert not mask[:, -1].any()

    def test_right_to_left_shifts_the_other_way(self):
        ramp = _x_ramp(1.0)
        warped, mask = warp_image(ramp, np.ones((H, W)), "right_to_left")
        np.testing.assert_allclose(warped[:, 1:], ramp[:, :-1])
        assert not mask[:, 0].any()

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            warp_image(np.zeros((H, W)), np.zeros((H, W - 1)), "left_to_right")


class TestSmooth:
    def test_constant_depth(self, rng):
        assert loss_smooth(np.full((H, W), 7.0), rng.uniform(size=(H, W, 3))) == 0.0

    def test_ramp_constant_image(self):
        assert loss_smooth(_x_ramp(0.3), np.full((H, W), 0.5)) == pytest.approx(0.3)
        assert loss_smooth(_x_ramp(-0.3).T, np.full((W, H), 0.5)) == pytest.approx(0.3)

    def test_image_edges_suppress(self):
        g = 0.2
        value = loss_smooth(_x_ramp(0.3), _x_ramp(g))
        assert value == pytest.approx(0.3 * math.exp(-g))
        assert value < 0.3


class TestEdgePreservance:
    def test_matching_gradients_give_zero(self, rng):
        img = rng.uniform(size=(H, W))
        half = math.atanh(0.5)
        params = EdgeParams(w0=0.0, b0=half, w1=0.0, b1=half)
        assert loss_edge_preservance(0.5 * img, img, params) == pytest.approx(0.0, abs=1e-12)

    def test_unit_ramp_zero_params(self):
        value = loss_edge_preservance(_x_ramp(1.0), np.full((H, W), 0.3), EdgeParams())
        assert EDGE_INTEGRAND == pytest.approx(0.8591, abs=1e-4)
        assert value == pytest.approx(EDGE_INTEGRAND * (W - 1) / W)

    def test_variant_selects_gradient(self, rng):
        img = rng.uniform(size=(H, W))
        depth = rng.uniform(5.0, 6.0, size=(H, W))
        params = EdgeParams(w0=0.3, b0=0.1, w1=2.0, b1=-0.2)
        a = loss_edge_preservance(depth, img, params, EdgeVariant.DX_DY)
        b = loss_edge_preservance(depth, img, params, EdgeVariant.DX_DX)
        assert a != pytest.approx(b)


class TestEps:
    def test_selectors_and_blend(self):
        depth, img = _x_ramp(1.0), np.full((H, W), 0.3)
        smooth = loss_smooth(depth, img)
        edge = loss_edge_preservance(depth, img, EdgeParams())
        assert loss_eps(depth, img, EdgeParams(), 0.0) == pytest.approx(smooth)
        assert loss_eps(depth, img, EdgeParams(), 1.0) == pytest.approx(edge)
        assert loss_eps(depth, img, EdgeParams(), 0.5) == pytest.approx((smooth + edge) / 2.0)

    def test_beta_range(self):
        with pytest.raises(ParameterError):
            loss_eps(_x_ramp(1.0), np.zeros((H, W)), EdgeParams(), 1.5)


class TestConsistency:
    def test_consistent(self, rng):
        d = rng.uniform(0.5, 3.0, size=(H, W))
        assert loss_disp_consistency(d, -d) == 0.0

    @pytest.mark.parametrize("mismatch, expected", [(0.5, 0.125), (2.0, 1.5)])
    def test_constant_mismatch(self, mismatch, expected):
        d = np.full((H, W), 1.0)
        assert loss_disp_consistency(d, -d + mismatch, 1.0) == pytest.approx(expected)


class TestSsim:
    def test_self_similarity(self, rng):
        a = rng.uniform(size=(H, W, 3))
        np.testing.assert_allclose(ssim(a, a), 1.0)

    def test_flat_patches(self):
        np.testing.assert_allclose(ssim(np.full((H, W), 0.4), np.full((H, W), 0.4)), 1.0)

    def test_inverted_checker_is_negative(self):
        checker = (np.add.outer(np.arange(H), np.arange(W)) % 2).astype(float)
        s = ssim(checker, 1.0 - checker)
        assert (s[1:-1, 1:-1] < 0).all()


class TestReprojection:
    def test_true_depth_leaves_interpolation_residue(self, scene):
        value = loss_reprojection(scene.pair, scene.depth, scene.depth_r)
        assert value < 1e-3

    def test_halved_depth_is_worse(self, scene):
        truth = loss_reprojection(scene.pair, scene.depth, scene.depth_r)
        halved = loss_reprojection(scene.pair, scene.depth / 2.0, scene.depth_r / 2.0)
        assert halved > truth

    def test_no_motion_limit(self, rng):
        img = rng.uniform(size=(H, W, 3))
        pair = StereoPair(left=img, right=img, focal=1.0, baseline=0.01)
        depth = np.full((H, W), 100.0)
        assert loss_reprojection(pair, depth, depth) == pytest.approx(0.0, abs=1e-8)

    def test_cross_views_averaged(self, scene):
        depth_l = scene.depth * 1.1
        plain = loss_reprojection(scene.pair, depth_l, scene.depth_r)
        cross = loss_reprojection(scene.pair, depth_l, scene.depth_r, cross=True)
        assert cross != plain
        assert cross >= 0.0

    def test_depth_shape_checked(self, scene):
        with pytest.raises(ParameterError):
            loss_reprojection(scene.pair, scene.depth[:-1], scene.depth_r)


class TestAppearance:
    def test_perfect_reconstruction(self):
        flat = np.full((H, W, 3), 0.5)
        pair = StereoPair(left=flat, right=flat, focal=10.0, baseline=0.5)
        depth = np.full((H, W), 3.0)
        assert loss_ssim(pair, depth, depth) == pytest.approx(0.0, abs=1e-12)

    def test_alpha_zero_is_reprojection(self, scene):
        depth = scene.depth * 1.2
        assert loss_appearance(scene.pair, depth, depth, alpha_ssim=0.0) == pytest.approx(
            loss_reprojection(scene.pair, depth, depth)
        )

    def test_ssim_term_bounded(self, rng):
        pair = StereoPair(left=rng.uniform(size=(H, W, 3)), right=rng.uniform(size=(H, W, 3)), focal=10.0, baseline=0.5)
        depth = rng.uniform(2.0, 8.0, size=(H, W))
        assert 0.0 <= loss_ssim(pair, depth, depth) <= 1.0


class TestUnsupervisedTotal:
    def test_eps_selector(self, scene):
        weights = DepthLossWeights(lambda_eps=1.0, lambda_repr=0.0, lambda_cons=0.0, lambda_app=0.0)
        report = loss_depth_unsup(scene.pair, scene.depth, scene.depth_r, weights=weights)
        assert report.total == pytest.approx(loss_eps(scene.depth, scene.pair.left, EdgeParams(), weights.beta_edge))

    def test_all_weights_zero(self, scene):
        weights = DepthLossWeights(lambda_eps=0.0, lambda_repr=0.0, lambda_cons=0.0, lambda_app=0.0)
        report = loss_depth_unsup(scene.pair, scene.depth * 1.3, scene.depth_r, weights=weights)
        assert report.total == 0.0
        assert not report.grad_depth_l.any() and not report.grad_depth_r.any() and not report.grad_params.any()

    def test_true_depth_is_minimum_of_sweep(self, scene):
        truth = loss_depth_unsup(scene.pair, scene.depth, scene.depth_r, weights=TOY_WEIGHTS).total
        for factor in (0.9, 0.95, 1.05, 1.1):
            d_l, d_r = scene.scaled_depths(factor)
            assert loss_depth_unsup(scene.pair, d_l, d_r, weights=TOY_WEIGHTS).total > truth

    def test_report_terms(self, scene):
        report = loss_depth_unsup(scene.pair, scene.depth, scene.depth_r)
        assert set(report.terms()) == {"eps", "reprojection", "consistency", "appearance", "total"}
        assert report.consistency == pytest.approx(0.0, abs=1e-15)


class TestSupervised:
    def _one(self, depth: float) -> ProjectedPoints:
        return ProjectedPoints(u=np.array([2.5]), v=np.array([1.5]), depth=np.array([depth]))

    def test_squared_error(self):
        pred = np.full((4, 4), 12.0)
        assert loss_depth_sup(pred, self._one(10.0), 1.0, epoch=0) == pytest.approx(4.0)

    def test_decay(self):
        pred = np.full((4, 4), 12.0)
        assert loss_depth_sup(pred, self._one(10.0), 1.0, epoch=100, decay_rate=0.01) == pytest.approx(4.0 / math.e)

    def test_empty_and_perfect(self):
        pred = np.full((4, 4), 12.0)
        assert loss_depth_sup(pred, ProjectedPoints.empty(), 1.0) == 0.0
        assert loss_depth_sup(pred, self._one(12.0), 1.0) == 0.0

    def test_gradient_lands_on_sample_pixel(self):
        pred = np.full((4, 4), 12.0)
        _, grad = loss_depth_sup_and_grad(pred, self._one(10.0), 1.0)
        assert grad[1, 2] == pytest.approx(4.0)
        assert np.count_nonzero(grad) == 1

    def test_point_outside_map(self):
        with pytest.raises(ParameterError):
            loss_depth_sup(np.ones((2, 2)), self._one(10.0), 1.0)
