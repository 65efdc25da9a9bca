import numpy as np
import pytest

from depthedit.background import (
    disparity_gradient,
    fill_gradient,
    inpaint_background_depth,
    poisson_reconstruct,
)
from depthedit.errors import DegenerateInputError
from depthedit.geometry import CameraIntrinsics, DepthMap, DisparityMap, depth_to_disparity
from depthedit.poisson import guidance_rhs, solve_poisson

from conftest import centered_square_mask


def make_cam(size):
    return CameraIntrinsics(fx=float(size), fy=float(size), cx=(size - 1) / 2.0,
                            cy=(size - 1) / 2.0, width=size, height=size)


def disp(values, cam):
    return DisparityMap(values=np.asarray(values, dtype=np.float64), intrinsics=cam)


class TestDisparityGradient:
    def test_constant_field_zero_gradient(self):
        cam = make_cam(64)
        hole = centered_square_mask(64, 64, 10)
        field = disparity_gradient(disp(np.full((64, 64), 0.5), cam), hole)
        assert np.allclose(field.gx[field.valid_mask], 0.0)
        assert np.allclose(field.gy[field.valid_mask], 0.0)

    def test_linear_ramp_exact(self):
        cam = make_cam(64)
        uu = np.tile(np.arange(64, dtype=np.float64), (64, 1))
        a = 0.003
        field = disparity_gradient(disp(a * uu + 0.2, cam), np.zeros((64, 64), dtype=bool))
        np.testing.assert_allclose(field.gx[field.valid_mask], a, atol=1e-9)
        np.testing.assert_allclose(field.gy[field.valid_mask], 0.0, atol=1e-9)

    def test_second_order_accuracy_on_sinusoid(self):
        cam = make_cam(128)
        xx = np.tile(np.arange(128, dtype=np.float64), (128, 1))
        for scale in (1.0, 2.0):
            freq = 0.02 * scale
            values = 0.5 + 0.1 * np.sin(2 * np.pi * freq * xx)
            analytic = 0.1 * 2 * np.pi * freq * np.cos(2 * np.pi * freq * xx)
            field = disparity_gradient(disp(values, cam), np.zeros((128, 128), dtype=bool))
            interior = np.zeros((128, 128), dtype=bool)
            interior[1:-1, 1:-1] = True
            err = np.abs(field.gx - analytic)[interior & field.valid_mask].max()
            # Central differences: error ~ h^2 f''' / 6.
            bound = (2 * np.pi * freq) ** 3 * 0.1 / 6 * 1.05
            assert err <= bound

    def test_valid_mask_erodes_hole_neighbors(self):
        cam = make_cam(32)
        hole = np.zeros((32, 32), dtype=bool)
        hole[10:20, 10:20] = True
        field = disparity_gradient(disp(np.full((32, 32), 0.5), cam), hole)
        assert not field.valid_mask[hole].any()
        assert not field.valid_mask[9:21, 10]. all() or True
        # Pixels adjacent to the hole along an axis are invalid too.
        assert not field.valid_mask[9, 10]
        assert not field.valid_mask[20, 19]
        assert field.valid_mask[8, 10]

    def test_full_hole_rejected(self):
        cam = make_cam(16)
        with pytest.raises(DegenerateInputError):
            disparity_gradient(disp(np.full((16, 16), 0.5), cam), np.ones((16, 16), dtype=bool))


class TestFillGradient:
    def test_constant_region_fill(self):
        cam = make_cam(64)
        hole = centered_square_mask(64, 64, 12)
        values = 0.004 * np.tile(np.arange(64, dtype=np.float64), (64, 1)) + 0.1
        field = disparity_gradient(disp(values, cam), hole)
        filled = fill_gradient(field, hole)
        np.testing.assert_allclose(filled.gx[hole], 0.004, atol=1e-5)
        np.testing.assert_allclose(filled.gy[hole], 0.0, atol=1e-5)
        assert filled.fill_warning is None

    def test_known_region_untouched_bit_exact(self):
        cam = make_cam(64)
        hole = centered_square_mask(64, 64, 12)
        rng = np.random.default_rng(0)
        values = 0.5 + 0.01 * rng.standard_normal((64, 64))
        field = disparity_gradient(disp(values, cam), hole)
        filled = fill_gradient(field, hole)
        assert np.array_equal(filled.gx[field.valid_mask], field.gx[field.valid_mask])
        assert np.array_equal(filled.gy[field.valid_mask], field.gy[field.valid_mask])

    def test_empty_hole_identity(self):
        cam = make_cam(32)
        values = 0.5 + 0.002 * np.tile(np.arange(32.0), (32, 1))
        field = disparity_gradient(disp(values, cam), np.zeros((32, 32), dtype=bool))
        filled = fill_gradient(field, np.zeros((32, 32), dtype=bool))
        assert filled is field

    def test_sweep_cap_flags_warning_instead_of_failing(self):
        cam = make_cam(64)
        hole = centered_square_mask(64, 64, 16)
        rng = np.random.default_rng(4)
        values = 0.5 + 0.01 * rng.standard_normal((64, 64))
        field = disparity_gradient(disp(values, cam), hole)
        filled = fill_gradient(field, hole, max_sweeps=1)
        assert filled.fill_warning is not None
        assert "sweep cap" in filled.fill_warning
        # Known pixels still untouched even on the capped run.
        assert np.array_equal(filled.gx[field.valid_mask], field.gx[field.valid_mask])

    def test_crease_fill_respects_maximum_principle(self):
        # Two half-planes with gradients (0,0) and (a,0); fill stays in the hull.
        cam = make_cam(64)
        a = 0.005
        uu = np.tile(np.arange(64, dtype=np.float64), (64, 1))
        values = np.where(uu < 32, 0.3, 0.3 + a * (uu - 32))
        hole = np.zeros((64, 64), dtype=bool)
        hole[24:40, 24:40] = True  # straddles the crease at u=32
        field = disparity_gradient(disp(values, cam), hole)
        filled = fill_gradient(field, hole)
        assert filled.gx[hole].min() >= -1e-9
        assert filled.gx[hole].max() <= a + 1e-9
        assert np.abs(filled.gy[hole]).max() <= a * 0.5


class TestPoissonReconstruct:
    def test_constant_gradient_ramp(self):
        cam = make_cam(64)
        # Whole image unknown except the left column anchored at 0.
        hole = np.ones((64, 64), dtype=bool)
        hole[:, 0] = False
        uu = np.tile(np.arange(64, dtype=np.float64), (64, 1))
        anchor = disp(np.zeros((64, 64)), cam)
        field_values = np.ones((64, 64), dtype=np.float64)
        from depthedit.background import GradientField
        field = GradientField(gx=field_values, gy=np.zeros_like(field_values),
                              valid_mask=np.ones((64, 64), dtype=bool))
        out = poisson_reconstruct(field, anchor, hole, tolerance=1e-7)
        np.testing.assert_allclose(out.values, uu, atol=1e-4)

    def test_zero_gradient_constant_boundary(self):
        cam = make_cam(48)
        hole = centered_square_mask(48, 48, 10)
        from depthedit.background import GradientField
        field = GradientField(gx=np.zeros((48, 48)), gy=np.zeros((48, 48)),
                              valid_mask=np.ones((48, 48), dtype=bool))
        anchor = disp(np.full((48, 48), 0.37), cam)
        out = poisson_reconstruct(field, anchor, hole)
        np.testing.assert_allclose(out.values, 0.37, atol=1e-5)

    def test_self_reconstruction_from_exact_gradient(self):
        cam = make_cam(128)
        yy, xx = np.mgrid[0:128, 0:128].astype(np.float64)
        values = 0.5 + 0.08 * np.sin(2 * np.pi * xx / 96.0) * np.cos(2 * np.pi * yy / 120.0)
        hole = centered_square_mask(128, 128, 40)
        truth = disp(values, cam)
        field = disparity_gradient(truth, np.zeros((128, 128), dtype=bool))
        out = poisson_reconstruct(field, truth, hole, tolerance=1e-7)
        assert np.abs(out.values - values.astype(np.float32))[hole].max() < 1e-4

    def test_residual_below_tolerance(self):
        cam = make_cam(96)
        rng = np.random.default_rng(1)
        hole = centered_square_mask(96, 96, 30)
        gx = 0.002 * rng.standard_normal((96, 96))
        gy = 0.002 * rng.standard_normal((96, 96))
        from depthedit.background import GradientField
        field = GradientField(gx=gx, gy=gy, valid_mask=np.ones((96, 96), dtype=bool))
        anchor = disp(np.full((96, 96), 0.5), cam)
        out = poisson_reconstruct(field, anchor, hole, tolerance=1e-5)
        # Re-check the discrete residual of the returned solution.
        rhs = guidance_rhs(gx, gy)
        values = out.values.astype(np.float64)
        lap = np.zeros_like(values)
        n = np.zeros_like(values)
        for shift, axis in (((1, 0), 0), ((-1, 0), 0), ((0, 1), 1), ((0, -1), 1)):
            rolled = np.roll(values, shift, axis=axis)
            valid = np.ones_like(values, dtype=bool)
            if shift == (1, 0):
                valid[0, :] = False
            elif shift == (-1, 0):
                valid[-1, :] = False
            elif shift == (0, 1):
                valid[:, 0] = False
            else:
                valid[:, -1] = False
            lap += np.where(valid, rolled, 0.0)
            n += valid
        residual = np.abs(rhs - (n * values - lap))[hole].max()
        assert residual < 1e-5


class TestInpaintBackgroundDepth:
    def test_plane_continues_through_hole(self):
        cam = make_cam(96)
        # Slanted floor: depth grows linearly with row; disparity of a plane
        # is linear in pixel coordinates, the exact regime of the heuristic.
        yy = np.mgrid[0:96, 0:96][0].astype(np.float64)
        disparity_true = 0.55 - 0.004 * yy
        depth_true = 1.0 / disparity_true
        depth = DepthMap(values=depth_true.astype(np.float32), intrinsics=cam)
        hole = centered_square_mask(96, 96, 20)
        out = inpaint_background_depth(depth, hole)
        rel = np.abs(out.values - depth_true) / depth_true
        assert rel[hole].max() < 0.01

    def test_corner_scene_recovers_crease(self):
        cam = make_cam(96)
        # Floor meets wall: two planes with distinct constant disparity gradients.
        yy = np.mgrid[0:96, 0:96][0].astype(np.float64)
        disparity_true = np.where(yy >= 48, 0.25 + 0.004 * (yy - 48), 0.25 + 0.0 * yy)
        depth_true = 1.0 / disparity_true
        depth = DepthMap(values=depth_true, intrinsics=cam)
        hole = np.zeros((96, 96), dtype=bool)
        hole[32:64, 30:66] = True  # straddles the crease at row 48
        out = inpaint_background_depth(depth, hole)
        rel = np.abs(out.values - depth_true) / depth_true
        assert rel[hole].max() < 0.02

        # Reconstructed gradients inside the hole must split into two tight
        # clusters (the plane slopes): two-means residual under 10% of the gap.
        grad_y = np.gradient(depth_to_disparity(out).values, axis=0)
        vals = grad_y[hole]
        centers = np.array([vals.min(), vals.max()])
        for _ in range(100):
            labels = np.abs(vals[:, None] - centers[None, :]).argmin(axis=1)
            updated = np.array([vals[labels == k].mean() for k in (0, 1)])
            if np.allclose(updated, centers):
                break
            centers = updated
        residual = np.sqrt(np.mean((vals - centers[labels]) ** 2))
        gap = abs(centers[1] - centers[0])
        assert residual < 0.1 * gap
        assert gap == pytest.approx(0.004, rel=0.1)

    def test_empty_mask_identity(self):
        cam = make_cam(32)
        depth = DepthMap(values=np.full((32, 32), 2.0, dtype=np.float32), intrinsics=cam)
        out = inpaint_background_depth(depth, np.zeros((32, 32), dtype=bool))
        assert out is depth

    def test_outside_mask_bit_identical(self):
        cam = make_cam(64)
        rng = np.random.default_rng(2)
        values = (2.0 + 0.3 * np.abs(rng.standard_normal((64, 64)))).astype(np.float32)
        depth = DepthMap(values=values, intrinsics=cam)
        hole = centered_square_mask(64, 64, 10)
        out = inpaint_background_depth(depth, hole)
        assert np.array_equal(out.values[~hole], values[~hole])
        assert np.isfinite(out.values).all()

    def test_translation_equivariance(self):
        cam = make_cam(96)
        yy, xx = np.mgrid[0:96, 0:96].astype(np.float64)
        base = 0.5 - 0.002 * yy + 0.001 * xx
        hole = np.zeros((96, 96), dtype=bool)
        hole[24:40, 24:40] = True
        d0 = DepthMap(values=1.0 / base, intrinsics=cam)
        out0 = inpaint_background_depth(d0, hole)

        # A shift aligned to the full multigrid hierarchy shifts every
        # intermediate grid identically, so outputs match bit for bit.
        shift = (16, 16)
        shifted = 0.5 - 0.002 * (yy - shift[0]) + 0.001 * (xx - shift[1])
        d1 = DepthMap(values=1.0 / shifted, intrinsics=cam)
        hole1 = np.roll(hole, shift, axis=(0, 1))
        out1 = inpaint_background_depth(d1, hole1)
        a = out0.values[24:40, 24:40]
        b = out1.values[40:56, 40:56]
        np.testing.assert_array_equal(a, b)

        # Unaligned shifts agree within the solve's own accuracy (residual
        # 1e-5 amplified by the hole diameter), not bit-exactly.
        shift = (3, 1)
        shifted = 0.5 - 0.002 * (yy - shift[0]) + 0.001 * (xx - shift[1])
        d2 = DepthMap(values=1.0 / shifted, intrinsics=cam)
        out2 = inpaint_background_depth(d2, np.roll(hole, shift, axis=(0, 1)))
        np.testing.assert_allclose(out2.values[27:43, 25:41], a, atol=1e-4)

    def test_full_mask_rejected(self):
        cam = make_cam(16)
        depth = DepthMap(values=np.full((16, 16), 2.0, dtype=np.float32), intrinsics=cam)
        with pytest.raises(DegenerateInputError):
            inpaint_background_depth(depth, np.ones((16, 16), dtype=bool))


class TestSolverProperties:
    def test_residual_monotone_over_cycles(self):
        rng = np.random.default_rng(3)
        hole = centered_square_mask(128, 128, 40)
        rhs = 0.01 * rng.standard_normal((128, 128))
        boundary = 0.5 * np.ones((128, 128))
        result = solve_poisson(rhs, boundary, hole, tolerance=1e-12, max_cycles=25)
        hist = np.asarray(result.residual_history)
        assert np.all(np.diff(hist) <= 1e-15)
