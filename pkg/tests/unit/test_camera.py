"""Unit tests for pinhole camera math and the virtual camera."""

import math

import numpy as np
import pytest

from libs.common.errors import DegenerateInstanceError, DimensionError, DomainError
from libs.geometry.camera import (
    CameraIntrinsics,
    RigidPose,
    SimilarityTransform,
    fit_virtual_camera,
    fov_to_intrinsics,
    look_at,
    object_to_view,
    pixel_rays,
    project,
    unproject,
)
from libs.mesh.types import TriangleMesh
from libs.scene.types import DepthMap, EntityMask


class TestIntrinsics:
    """Test intrinsics construction."""

    def test_fov_to_intrinsics_square(self):
        """Test focal length for a square 512 image at 49.1 degrees."""
        intr = fov_to_intrinsics(49.1, 512, 512)
        expected = 256.0 / math.tan(math.radians(49.1) / 2.0)
        assert intr.fx == pytest.approx(expected, abs=1e-9)
        assert intr.fy == intr.fx
        assert (intr.cx, intr.cy) == (256.0, 256.0)

    def test_fov_spans_longer_side(self):
        """Test the field of view spans the longer image side."""
        intr = fov_to_intrinsics(60.0, 640, 480)
        assert intr.fx == pytest.approx(320.0 / math.tan(math.radians(30.0)))

    @pytest.mark.parametrize("fov", [0.0, 180.0, -5.0])
    def test_invalid_fov(self, fov):
        """Test out-of-domain field of view raises DomainError."""
        with pytest.raises(DomainError):
            fov_to_intrinsics(fov, 64, 64)

    def test_crop_and_resize(self):
        """Test sub-window and resized intrinsics."""
        intr = CameraIntrinsics(fx=100, fy=100, cx=50, cy=40, width=100, height=80)
        cropped = intr.crop(10, 20, 30, 30)
        assert (cropped.cx, cropped.cy) == (30, 30)
        resized = cropped.resized(60, 60)
        assert resized.fx == pytest.approx(200.0)
        assert resized.cx == pytest.approx(60.0)


class TestProjection:
    """Test projection and unprojection."""

    def test_round_trip(self, small_intrinsics):
        """Test project(unproject(D)) reproduces pixel centres and depths."""
        for seed in range(10):
            rng = np.random.default_rng(seed)
            depth = DepthMap(rng.uniform(0.5, 5.0, size=small_intrinsics.shape))
            cloud = unproject(depth, small_intrinsics)
            proj = project(cloud, small_intrinsics)

            rows, cols = cloud.pixels[:, 0], cloud.pixels[:, 1]
            np.testing.assert_allclose(proj.uv[:, 0], cols + 0.5, atol=1e-6)
            np.testing.assert_allclose(proj.uv[:, 1], rows + 0.5, atol=1e-6)
            np.testing.assert_allclose(proj.depth, depth.values[rows, cols], rtol=1e-9)

    def test_unproject_skips_invalid_depth(self, small_intrinsics):
        """Test zero, negative and NaN depths are never lifted."""
        values = np.ones(small_intrinsics.shape)
        values[0, 0] = 0.0
        values[0, 1] = -1.0
        values[0, 2] = np.nan
        cloud = unproject(DepthMap(values), small_intrinsics)
        assert len(cloud) == values.size - 3

    def test_unproject_with_mask_and_colors(self, small_intrinsics):
        """Test masked unprojection carries colors."""
        depth = DepthMap(np.full(small_intrinsics.shape, 2.0))
        bits = np.zeros(small_intrinsics.shape, dtype=bool)
        bits[10:12, 20:23] = True
        colors = np.zeros(small_intrinsics.shape + (3,))
        colors[..., 1] = 0.25
        cloud = unproject(depth, small_intrinsics, EntityMask(bits), colors)
        assert len(cloud) == 6
        np.testing.assert_allclose(cloud.colors[:, 1], 0.25)

    def test_unproject_dimension_mismatch(self, small_intrinsics):
        """Test mismatched depth resolution raises DimensionError."""
        with pytest.raises(DimensionError):
            unproject(DepthMap(np.ones((10, 10))), small_intrinsics)

    def test_project_behind_camera(self, small_intrinsics):
        """Test points behind the camera are flagged, not raised."""
        proj = project(np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]), small_intrinsics)
        assert proj.behind.tolist() == [True, False]
        assert np.all(np.isnan(proj.uv[0]))

    def test_pixel_rays_unit_z(self, small_intrinsics):
        """Test ray directions have unit z."""
        rays = pixel_rays(small_intrinsics)
        assert rays.shape == (48, 64, 3)
        np.testing.assert_array_equal(rays[..., 2], 1.0)


class TestTransforms:
    """Test rigid and similarity transforms."""

    def test_non_orthonormal_rotation(self):
        """Test a scaled matrix is rejected."""
        with pytest.raises(DomainError):
            RigidPose(2.0 * np.eye(3))

    def test_reflection_rejected(self):
        """Test determinant -1 is rejected."""
        with pytest.raises(DomainError):
            RigidPose(np.diag([1.0, 1.0, -1.0]))

    def test_pose_inverse(self, rng):
        """Test inverse undoes a pose."""
        pose = look_at(np.array([1.0, 2.0, 3.0]), np.zeros(3), np.array([0.0, -1.0, 0.0]))
        points = rng.normal(size=(20, 3))
        np.testing.assert_allclose(pose.inverse().apply(pose.apply(points)), points, atol=1e-12)

    def test_similarity_compose_inverse(self, rng):
        """Test a similarity composed with its inverse is the identity."""
        t = SimilarityTransform(2.5, look_at(np.ones(3), np.zeros(3), np.array([0, 1.0, 0])).rotation,
                                np.array([0.1, -0.2, 0.3]))
        ident = t.inverse().compose(t)
        points = rng.normal(size=(10, 3))
        np.testing.assert_allclose(ident.apply(points), points, atol=1e-12)

    @pytest.mark.parametrize("scale", [0.0, -1.0, float("nan")])
    def test_invalid_similarity_scale(self, scale):
        """Test non-positive scales raise DomainError."""
        with pytest.raises(DomainError):
            SimilarityTransform(scale)


class TestLookAt:
    """Test look_at orientation."""

    def test_target_on_optical_axis(self):
        """Test the target projects onto +z."""
        pose = look_at(np.array([0.0, 0.0, -1.5]), np.zeros(3), np.array([0.0, 1.0, 0.0]))
        np.testing.assert_allclose(pose.apply(np.zeros(3)), [0.0, 0.0, 1.5], atol=1e-12)

    def test_parallel_hint_falls_back(self):
        """Test a viewing direction parallel to the hint still yields a valid pose."""
        pose = look_at(np.array([0.0, -2.0, 0.0]), np.zeros(3), np.array([0.0, 1.0, 0.0]))
        np.testing.assert_allclose(pose.rotation @ pose.rotation.T, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(pose.apply(np.zeros(3)), [0.0, 0.0, 2.0], atol=1e-12)

    def test_coincident_eye_and_target(self):
        """Test eye == target raises DomainError."""
        with pytest.raises(DomainError):
            look_at(np.zeros(3), np.zeros(3), np.array([0.0, 1.0, 0.0]))


class TestVirtualCamera:
    """Test the per-instance virtual camera."""

    def test_unit_cube_normalization(self, rng):
        """Test normalized points span the unit cube along the longest axis."""
        points = rng.uniform([-1, 0, 3], [1, 0.5, 3.5], size=(500, 3))
        vc = fit_virtual_camera(points, crop_res=64)
        normalized = vc.normalization.apply(points)
        extent = normalized.max(axis=0) - normalized.min(axis=0)
        assert extent.max() == pytest.approx(1.0)
        np.testing.assert_allclose(0.5 * (normalized.max(axis=0) + normalized.min(axis=0)), 0.0, atol=1e-12)

    def test_camera_distance_and_facing(self, rng):
        """Test the camera sits at the fixed distance on the source side."""
        points = rng.uniform([-0.2, -0.2, 2.0], [0.2, 0.2, 2.4], size=(200, 3))
        vc = fit_virtual_camera(points, distance=1.5)
        assert np.linalg.norm(vc.pose.center) == pytest.approx(1.5)
        # The source camera (view-space origin) lies in front of the virtual camera
        source = vc.forward.apply(np.zeros((1, 3)))
        assert source[0, 2] < 0.0

    def test_degenerate_inputs(self):
        """Test too few points and zero extent raise DegenerateInstanceError."""
        with pytest.raises(DegenerateInstanceError):
            fit_virtual_camera(np.zeros((3, 3)))
        with pytest.raises(DegenerateInstanceError):
            fit_virtual_camera(np.ones((10, 3)))

    def test_object_to_view_inverts_forward(self, rng, unit_cube):
        """Test placing a forward-mapped mesh at scale 1 returns it to view space."""
        view = unit_cube.with_vertices(unit_cube.vertices * 0.2 + np.array([0.1, 0.0, 2.0]))
        vc = fit_virtual_camera(view.vertices)
        in_camera = view.with_vertices(vc.forward.apply(view.vertices))
        placed = object_to_view(in_camera, vc.normalization, vc.pose, 1.0)
        np.testing.assert_allclose(placed.vertices, view.vertices, atol=1e-12)

    def test_object_to_view_scale_about_camera(self, unit_cube):
        """Test scaling by s moves vertices along rays from the virtual camera centre."""
        vc = fit_virtual_camera(unit_cube.vertices + np.array([0.0, 0.0, 3.0]))
        mesh = TriangleMesh(np.array([[0.0, 0.0, 1.0], [0.1, 0.0, 1.0], [0.0, 0.1, 1.0]]),
                            np.array([[0, 1, 2]]))
        placed = object_to_view(mesh, vc.normalization, vc.pose, 2.0)
        back = vc.forward.apply(placed.vertices)
        np.testing.assert_allclose(back, 2.0 * mesh.vertices, atol=1e-12)

    def test_object_to_view_scale_keeps_crop_pixels(self, unit_cube):
        """Test any placement scale leaves the mesh's virtual camera projection unchanged."""
        vc = fit_virtual_camera(unit_cube.vertices * 0.3 + np.array([0.4, -0.2, 2.5]), crop_res=64)
        mesh = unit_cube.with_vertices(unit_cube.vertices * 0.2 + np.array([0.0, 0.0, 1.5]))
        reference = project(mesh.vertices, vc.intr).uv
        for scale in (0.25, 1.0, 3.0):
            placed = object_to_view(mesh, vc.normalization, vc.pose, scale)
            uv = project(vc.forward.apply(placed.vertices), vc.intr).uv
            np.testing.assert_allclose(uv, reference, atol=1e-9)

    def test_object_to_view_invalid_scale(self, unit_cube):
        """Test a non-positive placement scale raises DomainError."""
        vc = fit_virtual_camera(unit_cube.vertices + np.array([0.0, 0.0, 3.0]))
        with pytest.raises(DomainError):
            object_to_view(unit_cube, vc.normalization, vc.pose, 0.0)
