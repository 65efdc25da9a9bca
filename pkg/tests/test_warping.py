import numpy as np
import pytest

from depthedit.errors import EmptySelectionError, InvalidConfigError
from depthedit.geometry import (
    CameraIntrinsics,
    DepthMap,
    RigidTransform,
    apply_transform,
    quat_from_axis_angle,
    unproject,
)
from depthedit.imgio import psnr
from depthedit.warping import (
    WarpConfig,
    export_correspondences,
    lift_to_mesh,
    rasterize,
    stretch_mask,
)

from conftest import centered_square_mask, flat_depth, smooth_texture

NO_RING = WarpConfig(ring_layers=0)


def plane_scene(cam, half=60, depth_value=2.0, seed=0):
    image = smooth_texture(cam.height, cam.width, seed=seed)
    mask = centered_square_mask(cam.height, cam.width, half)
    depth = flat_depth(cam, depth_value)
    return image, mask, depth


class TestLiftToMesh:
    def test_minimal_quad(self):
        cam = CameraIntrinsics(fx=100.0, fy=100.0, cx=3.0, cy=3.0, width=8, height=8)
        mask = np.zeros((8, 8), dtype=bool)
        mask[3:5, 3:5] = True
        depth = flat_depth(cam, 2.0)
        image = np.full((8, 8, 3), 0.25, dtype=np.float32)
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        assert mesh.num_vertices == 4
        assert mesh.num_triangles == 2

    def test_ring_adds_vertices(self):
        cam = CameraIntrinsics(fx=100.0, fy=100.0, cx=7.0, cy=7.0, width=16, height=16)
        mask = np.zeros((16, 16), dtype=bool)
        mask[6:10, 6:10] = True
        depth = flat_depth(cam, 2.0)
        image = np.zeros((16, 16, 3), dtype=np.float32)
        bare = lift_to_mesh(image, mask, depth, NO_RING)
        ringed = lift_to_mesh(image, mask, depth, WarpConfig(ring_layers=2))
        assert ringed.num_vertices > bare.num_vertices
        ring_positions = ringed.vertices[~ringed.core_vertex]
        # Ring layers sit behind the selection's depth.
        assert np.all(ring_positions[:, 2] > 2.0)

    def test_invalid_pixel_excluded(self):
        cam = CameraIntrinsics(fx=100.0, fy=100.0, cx=3.0, cy=3.0, width=8, height=8)
        mask = np.zeros((8, 8), dtype=bool)
        mask[2:6, 2:6] = True
        values = np.full((8, 8), 2.0, dtype=np.float32)
        values[3, 3] = np.nan
        depth = DepthMap(values=values, intrinsics=cam)
        image = np.zeros((8, 8, 3), dtype=np.float32)
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        bad = np.flatnonzero((mesh.source_uv[:, 0] == 3) & (mesh.source_uv[:, 1] == 3))
        assert bad.size == 0

    def test_empty_mask_rejected(self, cam256):
        image = np.zeros((256, 256, 3), dtype=np.float32)
        with pytest.raises(EmptySelectionError):
            lift_to_mesh(image, np.zeros((256, 256), dtype=bool), flat_depth(cam256), NO_RING)

    def test_plane_surface_area_matches_analytic(self, cam512):
        image, mask, depth = plane_scene(cam512, half=60)
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        v = mesh.vertices
        t = mesh.triangles
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        area = 0.5 * np.linalg.norm(cross, axis=1).sum()
        # 120x120 pixel square of vertices spans 119x119 pixel quads.
        expected = (119 * 2.0 / cam512.fx) * (119 * 2.0 / cam512.fy)
        assert area == pytest.approx(expected, rel=0.01)

    def test_discontinuity_quads_dropped(self):
        cam = CameraIntrinsics(fx=100.0, fy=100.0, cx=3.0, cy=3.0, width=8, height=8)
        mask = np.zeros((8, 8), dtype=bool)
        mask[2:6, 2:6] = True
        values = np.full((8, 8), 2.0, dtype=np.float32)
        values[:, 4:] = 3.0  # 50% jump across the column boundary
        depth = DepthMap(values=values, intrinsics=cam)
        image = np.zeros((8, 8, 3), dtype=np.float32)
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        # Quads straddling columns 3-4 are dropped: 3x3 quads per side band.
        left = np.isin(mesh.triangles, np.flatnonzero(mesh.source_uv[:, 0] <= 3)).all(axis=1)
        right = np.isin(mesh.triangles, np.flatnonzero(mesh.source_uv[:, 0] >= 4)).all(axis=1)
        assert np.all(left | right)


class TestRasterize:
    def test_identity_reproduces_source(self, cam512):
        image, mask, depth = plane_scene(cam512, half=60)
        mesh = lift_to_mesh(image, mask, depth)
        result = rasterize(mesh, RigidTransform.identity())
        assert result.visible_mask[mask].all()
        assert psnr(result.image, image, mask) >= 50.0

    def test_identity_visible_equals_mask(self, cam512):
        image, mask, depth = plane_scene(cam512, half=40)
        mesh = lift_to_mesh(image, mask, depth)
        result = rasterize(mesh, RigidTransform.identity())
        assert np.array_equal(result.visible_mask, mask)
        np.testing.assert_allclose(result.target_depth[mask], 2.0, atol=1e-5)

    def test_round_trip_through_transform(self, cam512):
        image, mask, depth = plane_scene(cam512, half=70)
        t = RigidTransform(
            rotation=quat_from_axis_angle([0, 1, 0], np.radians(12.0)),
            translation=np.array([0.05, 0.0, 0.0]),
            pivot=np.array([0.0, 0.0, 2.0]),
        )
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        fwd = rasterize(mesh, t)
        assert fwd.visible_mask.sum() > 1000

        back_depth = DepthMap(
            values=np.where(fwd.visible_mask, fwd.target_depth, np.nan).astype(np.float32),
            intrinsics=cam512)
        mesh_back = lift_to_mesh(fwd.image, fwd.visible_mask, back_depth, NO_RING)
        back = rasterize(mesh_back, t.inverse())
        both = back.visible_mask & mask
        assert both.sum() > 1000
        assert psnr(back.image, image, both) >= 35.0

    def test_zoom_silhouette_area_ratio(self, cam512):
        image, mask, depth = plane_scene(cam512, half=60)
        mesh = lift_to_mesh(image, mask, depth)
        base = rasterize(mesh, RigidTransform.identity())
        toward = RigidTransform(rotation=[1, 0, 0, 0], translation=np.array([0.0, 0.0, -1.0]),
                                pivot=np.zeros(3))
        zoomed = rasterize(mesh, toward)
        ratio = zoomed.visible_mask.sum() / base.visible_mask.sum()
        assert ratio == pytest.approx(4.0, rel=0.02)

    def test_determinism(self, cam512):
        image, mask, depth = plane_scene(cam512, half=50)
        t = RigidTransform(rotation=quat_from_axis_angle([0, 1, 0], 0.3),
                           translation=np.array([0.1, 0.0, -0.2]), pivot=np.array([0.0, 0.0, 2.0]))
        mesh = lift_to_mesh(image, mask, depth)
        a = rasterize(mesh, t)
        b = rasterize(mesh, t)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.visible_mask, b.visible_mask)
        assert np.array_equal(a.target_depth, b.target_depth, equal_nan=True)
        assert np.array_equal(a.correspondence, b.correspondence, equal_nan=True)

    def test_occlusion_nearer_plane_wins(self, cam512):
        image = np.zeros((512, 512, 3), dtype=np.float32)
        image[:, :250] = [1.0, 0.0, 0.0]   # far plane, red
        image[:, 250:] = [0.0, 0.0, 1.0]   # near plane, blue
        mask = np.zeros((512, 512), dtype=bool)
        mask[200:300, 140:220] = True      # red patch at 2 m
        mask[200:300, 292:372] = True      # blue patch at 1 m
        values = np.full((512, 512), 2.0, dtype=np.float32)
        values[:, 250:] = 1.0
        depth = DepthMap(values=values, intrinsics=cam512)
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        # Shift right in x: the near plane's projection slides twice as fast,
        # overlapping the far patch's footprint.
        t = RigidTransform(rotation=[1, 0, 0, 0], translation=np.array([-0.35, 0.0, 0.0]),
                           pivot=np.zeros(3))
        result = rasterize(mesh, t)
        blue = result.image[..., 2] > 0.5
        red = result.image[..., 0] > 0.5
        # Where the near plane landed, the far plane also projects: the near
        # (blue) color must win every contested pixel.
        near_src = result.correspondence[..., 0] >= 250
        contested = result.visible_mask & near_src
        assert contested.sum() > 500
        assert blue[contested].all()
        assert not red[contested].any()

    def test_depth_consistency(self, cam512):
        image, mask, depth = plane_scene(cam512, half=50)
        t = RigidTransform(rotation=quat_from_axis_angle([1, 0, 0], 0.2),
                           translation=np.array([0.0, 0.05, -0.3]), pivot=np.array([0.0, 0.0, 2.0]))
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        result = rasterize(mesh, t)
        vis = result.visible_mask
        src = result.correspondence[vis]
        pts = unproject(src, np.full(src.shape[0], 2.0), cam512)
        moved = apply_transform(t, pts)
        np.testing.assert_allclose(result.target_depth[vis], moved[:, 2], atol=1e-4)

    def test_offscreen_mesh_empty(self, cam512):
        image, mask, depth = plane_scene(cam512, half=30)
        mesh = lift_to_mesh(image, mask, depth)
        t = RigidTransform(rotation=[1, 0, 0, 0], translation=np.array([50.0, 0.0, 0.0]),
                           pivot=np.zeros(3))
        result = rasterize(mesh, t)
        assert not result.visible_mask.any()

    def test_masks_disjoint_and_vacated_area_ambiguous(self, cam512):
        image, mask, depth = plane_scene(cam512, half=40)
        mesh = lift_to_mesh(image, mask, depth)
        t = RigidTransform(rotation=[1, 0, 0, 0], translation=np.array([0.5, 0.0, 0.0]),
                           pivot=np.zeros(3))
        result = rasterize(mesh, t)
        assert not (result.visible_mask & result.ambiguous_mask).any()
        vacated = mask & ~result.visible_mask
        assert vacated.any()
        assert result.ambiguous_mask[vacated].all()


class TestStretch:
    def test_identity_unit_interior(self, cam512):
        image, mask, depth = plane_scene(cam512, half=40)
        mesh = lift_to_mesh(image, mask, depth)
        result = rasterize(mesh, RigidTransform.identity())
        interior = centered_square_mask(512, 512, 30)
        np.testing.assert_allclose(result.stretch.values[interior], 1.0, atol=1e-6)

    def test_identity_threshold_mask_empty(self, cam512):
        image, mask, depth = plane_scene(cam512, half=40)
        mesh = lift_to_mesh(image, mask, depth)
        result = rasterize(mesh, RigidTransform.identity())
        over, _ = stretch_mask(result, 4.0)
        assert not over.any()

    def test_zoom_doubles_stretch(self, cam512):
        image, mask, depth = plane_scene(cam512, half=50)
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        toward = RigidTransform(rotation=[1, 0, 0, 0], translation=np.array([0.0, 0.0, -1.0]),
                                pivot=np.zeros(3))
        result = rasterize(mesh, toward)
        interior = centered_square_mask(512, 512, 80)
        vals = result.stretch.values[interior & result.visible_mask]
        assert np.isfinite(vals).all()
        np.testing.assert_allclose(vals, 2.0, atol=1e-3)

    def test_threshold_validation(self, cam512):
        image, mask, depth = plane_scene(cam512, half=20)
        mesh = lift_to_mesh(image, mask, depth)
        result = rasterize(mesh, RigidTransform.identity())
        with pytest.raises(InvalidConfigError):
            stretch_mask(result, 1.0)

    def test_masked_fraction_grows_with_grazing_angle(self, cam512):
        image, mask, depth = plane_scene(cam512, half=90)
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        # Hinge on the plane's left edge so the far side sweeps toward the camera.
        pivot = np.array([-90 * 2.0 / cam512.fx, 0.0, 2.0])
        fractions = []
        for angle in (15.0, 30.0, 45.0, 60.0):
            t = RigidTransform(rotation=quat_from_axis_angle([0, 1, 0], np.radians(angle)),
                               translation=np.zeros(3), pivot=pivot)
            result = rasterize(mesh, t)
            over, _ = stretch_mask(result, 1.2)
            fractions.append(over.sum() / result.visible_mask.sum())
        assert fractions == sorted(fractions)
        assert fractions[-1] > fractions[0]

    def test_stretch_mask_moves_pixels(self, cam512):
        image, mask, depth = plane_scene(cam512, half=90)
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        t = RigidTransform(rotation=quat_from_axis_angle([0, 1, 0], np.radians(55.0)),
                           translation=np.zeros(3),
                           pivot=np.array([-90 * 2.0 / cam512.fx, 0.0, 2.0]))
        result = rasterize(mesh, t)
        over, masked = stretch_mask(result, 1.2)
        assert over.any()
        assert not masked.visible_mask[over].any()
        assert masked.ambiguous_mask[over].all()
        assert np.isnan(masked.correspondence[over]).all()


class TestExportCorrespondences:
    def test_identity_pairs_match(self, cam512):
        image, mask, depth = plane_scene(cam512, half=40)
        mesh = lift_to_mesh(image, mask, depth)
        result = rasterize(mesh, RigidTransform.identity())
        pairs = export_correspondences(result, stride=4)
        np.testing.assert_allclose(pairs.source, pairs.target, atol=1e-9)
        assert (pairs.confidence == 1.0).all()

    def test_count_bound(self, cam512):
        image, mask, depth = plane_scene(cam512, half=40)
        mesh = lift_to_mesh(image, mask, depth)
        result = rasterize(mesh, RigidTransform.identity())
        for stride in (2, 4, 8):
            pairs = export_correspondences(result, stride=stride)
            bound = int(np.ceil(result.visible_mask.sum() / stride ** 2))
            assert len(pairs) <= bound

    def test_pairs_reproject_onto_targets(self, cam512):
        image, mask, depth = plane_scene(cam512, half=50)
        t = RigidTransform(rotation=quat_from_axis_angle([0, 1, 0], np.radians(10.0)),
                           translation=np.array([0.0, 0.0, -0.2]), pivot=np.array([0.0, 0.0, 2.0]))
        mesh = lift_to_mesh(image, mask, depth, NO_RING)
        result = rasterize(mesh, t)
        pairs = export_correspondences(result, stride=4)
        pts = unproject(pairs.source, np.full(len(pairs), 2.0), cam512)
        moved = apply_transform(t, pts)
        reproj = np.stack([cam512.fx * moved[:, 0] / moved[:, 2] + cam512.cx,
                           cam512.fy * moved[:, 1] / moved[:, 2] + cam512.cy], axis=1)
        err = np.linalg.norm(reproj - pairs.target, axis=1)
        assert err.max() <= 0.5
