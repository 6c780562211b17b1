"""Unit tests for instance crops, completion and reconstruction hooks, scale alignment and placement."""

import subprocess
from pathlib import Path

import numpy as np
import pytest

from libs.common.config import CameraSettings, RansacSettings
from libs.common.errors import CompletionError, CorrespondenceFallback, ReconstructionError
from libs.geometry.camera import fit_virtual_camera, fov_to_intrinsics
from libs.instance.alignment import align_scale_ransac, depth_correspondences, fallback_scale, place_instance
from libs.instance.hooks import (
    CompletionHook,
    ReconstructionHook,
    complete_crop,
    reconstruct_object,
    view_oracle,
)
from libs.instance.processor import InstanceProcessor
from libs.instance.reprojection import (
    CaptureCamera,
    NormalizedCrop,
    RawCropOperator,
    ReprojectionOperator,
    SceneView,
    amodal_mask,
    square_bbox,
)
from libs.mesh.io import load_mesh, save_mesh
from libs.mesh.raster import render_depth
from libs.mesh.sampling import sample_surface
from libs.metrics.scores import chamfer
from libs.scene.io import write_image
from libs.scene.manifest import load_manifest
from libs.scene.types import NEUTRAL, DepthMap, EntityMask, InstanceRecord
from libs.synth.oracle import PerturbationRanges
from libs.synth.tessellate import box, uv_sphere

RED = np.array([0.9, 0.1, 0.1])


@pytest.fixture
def sphere_scene():
    """A red sphere in front of an empty background, with its instance record."""
    intr = fov_to_intrinsics(60.0, 96, 72)
    sphere = uv_sphere(0.5, 32)
    depth = DepthMap(render_depth(sphere.with_vertices(sphere.vertices + [0.2, 0.0, 3.0]), intr))
    image = np.tile(RED, intr.shape + (1,))
    inst = InstanceRecord("ball", EntityMask(depth.validity), label="ball")
    return SceneView(image=image, depth=depth, intr=intr), inst


@pytest.fixture
def analytic_crop():
    """Crop whose depth is the exact render of a sphere in the virtual camera frame."""
    rng = np.random.default_rng(0)
    camera = fit_virtual_camera(rng.uniform([-0.3, -0.3, 2.0], [0.3, 0.3, 2.5], size=(100, 3)), crop_res=64)
    truth = uv_sphere(0.4, 32)
    truth = truth.with_vertices(truth.vertices + [0.0, 0.0, 1.5])
    depth = DepthMap(render_depth(truth, camera.intr))
    crop = NormalizedCrop(
        np.full((64, 64, 3), NEUTRAL),
        EntityMask(depth.validity),
        depth,
        camera,
        CaptureCamera(camera.intr, camera.forward),
    )
    return crop, truth


def with_depth(crop: NormalizedCrop, values: np.ndarray) -> NormalizedCrop:
    depth = DepthMap(values)
    return NormalizedCrop(crop.rgb, EntityMask(depth.validity), depth, crop.camera, crop.capture)


class TestAmodalMask:
    """Test mask recovery from neutral-background crops."""

    def test_threshold(self):
        """Test only differences above 2/255 count."""
        rgb = np.full((4, 4, 3), NEUTRAL)
        rgb[0, 0, 1] = NEUTRAL + 3.0 / 255.0
        rgb[1, 1, 2] = NEUTRAL - 1.0 / 255.0
        mask = amodal_mask(rgb)
        assert mask.count == 1
        assert mask.bits[0, 0]

    def test_quantized_neutral_is_empty(self):
        """Test the 8-bit neutral value 128 is still background."""
        assert amodal_mask(np.full((3, 3, 3), 128.0 / 255.0)).is_empty


class TestReprojection:
    """Test crop generation through the virtual camera."""

    def test_splat_colors_and_depth(self, sphere_scene):
        """Test splatted pixels carry copied colors and depth; the rest stay neutral."""
        scene, inst = sphere_scene
        crop = ReprojectionOperator(CameraSettings(crop_res=64)).reproject(inst, scene)

        assert crop.mode == "reprojection"
        assert crop.mask.count > 100
        np.testing.assert_array_equal(crop.depth.validity, crop.mask.bits)
        np.testing.assert_allclose(crop.rgb[crop.mask.bits], np.tile(RED, (crop.mask.count, 1)))
        np.testing.assert_array_equal(crop.rgb[~crop.mask.bits], NEUTRAL)

    def test_visible_points_within_crop(self, sphere_scene):
        """Test the normalized object stays inside the crop frame."""
        scene, inst = sphere_scene
        crop = ReprojectionOperator(CameraSettings(crop_res=64)).reproject(inst, scene)
        rows = np.flatnonzero(crop.mask.bits.any(axis=1))
        cols = np.flatnonzero(crop.mask.bits.any(axis=0))
        assert rows.min() > 0 and rows.max() < 63
        assert cols.min() > 0 and cols.max() < 63

    def test_raw_crop(self, sphere_scene):
        """Test the image-space crop covers the square around the mask."""
        scene, inst = sphere_scene
        crop = RawCropOperator(CameraSettings(crop_res=64)).reproject(inst, scene)
        rs, cs, side = crop.source_bbox
        r0, r1, c0, c1 = inst.mask.bbox
        assert side == max(r1 - r0, c1 - c0)
        assert crop.mode == "raw_crop"
        assert crop.capture.intr.width == 64
        assert crop.mask.count > 0.5 * 64 * 64

    def test_square_bbox(self):
        """Test a wide box is grown vertically about its centre."""
        assert square_bbox((10, 14, 0, 10)) == (7, 0, 10)

    def test_crop_shape_checked(self, analytic_crop):
        """Test crop planes must share the crop resolution."""
        crop, _ = analytic_crop
        with pytest.raises(ValueError):
            NormalizedCrop(np.zeros((8, 8, 3)), crop.mask, crop.depth, crop.camera, crop.capture)


class TestScaleAlignment:
    """Test RANSAC scale recovery along camera rays."""

    def test_exact_least_squares(self, analytic_crop):
        """Test an outlier-free reconstruction recovers the scale exactly."""
        crop, truth = analytic_crop
        recon = truth.with_vertices(truth.vertices / 2.5)
        result = align_scale_ransac(recon, crop, seed=0)
        assert result.scale == pytest.approx(2.5, rel=1e-9)
        assert result.inlier_fraction == pytest.approx(1.0)

    def test_recovers_scale_with_outliers(self, analytic_crop):
        """Test 30% corrupted crop depths do not move the estimate."""
        crop, truth = analytic_crop
        values = crop.depth.values.copy()
        rows, cols = np.nonzero(crop.depth.validity)
        rng = np.random.default_rng(1)
        bad = rng.choice(len(rows), size=int(0.3 * len(rows)), replace=False)
        values[rows[bad], cols[bad]] += 0.5

        recon = truth.with_vertices(truth.vertices * 0.4)
        result = align_scale_ransac(recon, with_depth(crop, values), seed=3, params=RansacSettings(iters=256))
        assert result.scale == pytest.approx(2.5, rel=1e-9)
        assert result.inlier_fraction == pytest.approx(0.7, abs=0.02)

    def test_correspondences_are_ray_distances(self, analytic_crop):
        """Test paired distances share rays, so the ratio is the scale."""
        crop, truth = analytic_crop
        r, c = depth_correspondences(truth.with_vertices(truth.vertices * 0.5), crop)
        assert len(r) > 500
        np.testing.assert_allclose(c / r, 2.0, rtol=1e-9)

    def test_too_few_pairs_fall_back(self, analytic_crop):
        """Test a nearly empty crop raises the fallback signal and the bbox ratio is used."""
        crop, truth = analytic_crop
        values = np.full(crop.depth.shape, np.nan)
        rows, cols = np.nonzero(crop.depth.validity)
        values[rows[:10], cols[:10]] = crop.depth.values[rows[:10], cols[:10]]
        sparse = with_depth(crop, values)

        with pytest.raises(CorrespondenceFallback) as exc_info:
            align_scale_ransac(truth, sparse)
        assert exc_info.value.pair_count <= 10
        assert fallback_scale(truth, sparse) > 0.0

    def test_place_instance(self, analytic_crop):
        """Test placement at the recovered scale lands on the view-space object."""
        crop, truth = analytic_crop
        recon = truth.with_vertices(truth.vertices / 2.5)
        placed = place_instance(recon, 2.5, crop.camera)
        expected = crop.camera.forward.inverse().apply(truth.vertices)
        np.testing.assert_allclose(placed.vertices, expected, atol=1e-9)


class TestCompletionHooks:
    """Test completion modes."""

    def test_identity(self, analytic_crop):
        """Test identity completion returns the crop unchanged."""
        crop, _ = analytic_crop
        assert complete_crop(crop, "ball", CompletionHook()) is crop

    def test_oracle_file(self, tmp_path, analytic_crop):
        """Test a stored completion replaces colors and recomputes the mask."""
        crop, _ = analytic_crop
        rgb = np.full((64, 64, 3), NEUTRAL)
        rgb[10:20, 5:15] = RED
        write_image(tmp_path / "done.png", rgb)

        completed = complete_crop(crop, "ball", CompletionHook(mode="oracle_file", path=str(tmp_path / "done.png")))
        assert completed.mask.count == 100
        assert completed.depth is crop.depth

    def test_oracle_file_wrong_size(self, tmp_path, analytic_crop):
        """Test a completion at another resolution is rejected."""
        crop, _ = analytic_crop
        write_image(tmp_path / "small.png", np.zeros((32, 32, 3)))
        with pytest.raises(CompletionError):
            complete_crop(crop, "ball", CompletionHook(mode="oracle_file", path=str(tmp_path / "small.png")))

    def test_oracle_file_missing(self, analytic_crop):
        """Test oracle mode without any stored completion fails."""
        crop, _ = analytic_crop
        with pytest.raises(CompletionError):
            complete_crop(crop, "ball", CompletionHook(mode="oracle_file"))

    def test_external_command_failure(self, mocker, analytic_crop):
        """Test a non-zero exit surfaces the code and stderr."""
        crop, _ = analytic_crop
        run = mocker.patch(
            "libs.instance.hooks.subprocess.run",
            return_value=subprocess.CompletedProcess(args=[], returncode=3, stdout="", stderr="out of memory"),
        )
        with pytest.raises(CompletionError) as exc_info:
            complete_crop(crop, "ball", CompletionHook(mode="external_command", command="inpaint --fast"))

        assert exc_info.value.returncode == 3
        assert "out of memory" in exc_info.value.stderr
        args = run.call_args[0][0]
        assert args[:2] == ["inpaint", "--fast"]

    def test_external_command_success(self, mocker, analytic_crop):
        """Test the command reads the crop directory and writes the declared output."""
        crop, _ = analytic_crop
        seen = {}

        def fake_run(args, **kwargs):
            directory = Path(args[2])
            seen["files"] = sorted(p.name for p in directory.iterdir())
            rgb = np.full((64, 64, 3), NEUTRAL)
            rgb[:8, :8] = RED
            write_image(directory / "completed.png", rgb)
            return subprocess.CompletedProcess(args=args, returncode=0, stdout="", stderr="")

        mocker.patch("libs.instance.hooks.subprocess.run", side_effect=fake_run)
        hook = CompletionHook(mode="external_command", command="inpaint --in {dir} --quiet")
        completed = complete_crop(crop, "ball", hook)

        assert seen["files"] == ["crop.json", "crop.png", "mask.png"]
        assert completed.mask.count == 64

    def test_external_command_without_output(self, mocker, analytic_crop):
        """Test a successful command that writes nothing is an error."""
        crop, _ = analytic_crop
        mocker.patch(
            "libs.instance.hooks.subprocess.run",
            return_value=subprocess.CompletedProcess(args=[], returncode=0, stdout="", stderr=""),
        )
        with pytest.raises(CompletionError):
            complete_crop(crop, "ball", CompletionHook(mode="external_command", command="inpaint"))


class TestReconstructionHooks:
    """Test reconstruction modes."""

    def test_oracle_mesh(self, tmp_path, analytic_crop, unit_sphere):
        """Test a stored mesh is loaded as is."""
        crop, _ = analytic_crop
        save_mesh(tmp_path / "obj.ply", unit_sphere)
        mesh = reconstruct_object(crop, ReconstructionHook(path=str(tmp_path / "obj.ply")))
        assert mesh.n_faces == unit_sphere.n_faces

    def test_missing_and_empty_meshes(self, tmp_path, analytic_crop):
        """Test unreadable or faceless reconstructions raise ReconstructionError."""
        crop, _ = analytic_crop
        with pytest.raises(ReconstructionError):
            reconstruct_object(crop, ReconstructionHook(path=str(tmp_path / "none.obj")))
        (tmp_path / "empty.obj").write_text("v 0 0 0\n", encoding="utf-8")
        with pytest.raises(ReconstructionError):
            reconstruct_object(crop, ReconstructionHook(path=str(tmp_path / "empty.obj")))
        with pytest.raises(ReconstructionError):
            reconstruct_object(crop, ReconstructionHook())

    def test_external_command_failure(self, mocker, analytic_crop):
        """Test a failing reconstructor raises ReconstructionError."""
        crop, _ = analytic_crop
        mocker.patch(
            "libs.instance.hooks.subprocess.run",
            return_value=subprocess.CompletedProcess(args=[], returncode=1, stdout="", stderr="crash"),
        )
        with pytest.raises(ReconstructionError):
            reconstruct_object(crop, ReconstructionHook(mode="external_command", command="recon"))

    def test_view_oracle_coarse_box_at_image_border(self):
        """Test a raw crop of a twelve-face box cut by the image edge still yields a carved surface."""
        intr = fov_to_intrinsics(60.0, 96, 72)
        cube = box((0.5, 0.5, 0.5))
        cube = cube.with_vertices(cube.vertices + [-1.6, 0.0, 3.0])
        depth = DepthMap(render_depth(cube, intr))
        assert depth.validity[:, 0].any()
        scene = SceneView(image=np.tile(RED, intr.shape + (1,)), depth=depth, intr=intr)
        inst = InstanceRecord("crate", EntityMask(depth.validity), label="crate")
        crop = RawCropOperator(CameraSettings(crop_res=64)).reproject(inst, scene)

        mesh = view_oracle(crop, cube, PerturbationRanges(), seed=0)
        assert mesh.n_faces > cube.n_faces
        assert np.isfinite(mesh.vertices).all()


class TestInstanceProcessor:
    """Test the per-instance branch on a synthetic bundle."""

    @pytest.fixture
    def bundle_scene(self, synthetic_bundle):
        manifest = load_manifest(synthetic_bundle)
        scene = SceneView(image=manifest.image, depth=manifest.depth, intr=manifest.intr)
        things = [inst for inst in manifest.instances if inst.is_thing]
        return scene, things

    def test_oracle_mesh_placed_on_ground_truth(self, test_settings, bundle_scene):
        """Test the stored oracle reconstruction is placed back onto its object."""
        scene, things = bundle_scene
        inst = things[0]
        result = InstanceProcessor(test_settings).process(inst, scene, seed=0)

        assert result.status == "ok"
        assert result.scale > 0
        assert result.inlier_fraction > 0.5
        gt = load_mesh(inst.gt_mesh_path)
        lo, hi = gt.bounds()
        diag = float(np.linalg.norm(hi - lo))
        distance = chamfer(sample_surface(result.mesh, 5000, 1), sample_surface(gt, 5000, 2))
        assert distance < 0.05 * diag

    @pytest.mark.parametrize("use_reprojection", [True, False])
    def test_view_oracle(self, test_settings, bundle_scene, use_reprojection):
        """Test the view oracle yields a placed partial object for both crop operators."""
        scene, things = bundle_scene
        processor = InstanceProcessor(test_settings, recon_hook=ReconstructionHook(mode="oracle_view"),
                                      use_reprojection=use_reprojection)
        result = processor.process(things[0], scene, seed=0)
        assert not result.skipped
        assert result.mesh is not None and not result.mesh.is_empty
        assert set(result.timings) >= {"reproject", "complete", "reconstruct", "place"}

    def test_degenerate_instance_skipped(self, test_settings, bundle_scene):
        """Test an instance with two visible pixels is skipped with its error."""
        scene, things = bundle_scene
        rows, cols = np.nonzero(things[0].mask.bits)
        bits = np.zeros(things[0].mask.shape, dtype=bool)
        bits[rows[:2], cols[:2]] = True
        inst = InstanceRecord("speck", EntityMask(bits), label="speck")

        result = InstanceProcessor(test_settings).process(inst, scene, seed=0)
        assert result.skipped
        assert result.mesh is None
        assert result.error["code"] == "degenerate_instance"
        assert result.to_dict()["status"] == "skipped"
