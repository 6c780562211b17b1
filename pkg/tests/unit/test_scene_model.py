"""Unit tests for scene analysis products, raster I/O, manifests and depth alignment."""

import json
import shutil

import numpy as np
import pytest

from libs.common.errors import (
    DimensionError,
    DomainError,
    MaskOverlapError,
    MissingFileError,
    RankDeficiencyError,
    ResolutionMismatchError,
    SchemaError,
)
from libs.scene.depth_align import fit_scale_shift
from libs.scene.io import read_image, read_mask, read_pfm, write_image, write_mask, write_pfm
from libs.scene.manifest import DepthKind, load_manifest, mask_overlap_count, partition_entities
from libs.scene.types import NEUTRAL, Category, DepthMap, EntityMask, InstanceRecord


class TestDepthMap:
    """Test depth map validity and affine maps."""

    def test_validity(self):
        """Test only finite, strictly positive pixels are valid."""
        depth = DepthMap(np.array([[1.0, 0.0], [np.nan, -2.0]]))
        assert depth.validity.tolist() == [[True, False], [False, False]]

    def test_scaled_keeps_invalid(self):
        """Test invalid pixels stay invalid after scaling."""
        depth = DepthMap(np.array([[1.0, np.nan], [2.0, 0.0]]))
        scaled = depth.scaled(2.0, 0.5)
        assert scaled.values[0, 0] == 2.5
        assert scaled.values[1, 0] == 4.5
        assert np.isnan(scaled.values[0, 1]) and np.isnan(scaled.values[1, 1])

    def test_rejects_non_2d(self):
        """Test a 3D array is rejected."""
        with pytest.raises(DimensionError):
            DepthMap(np.ones((2, 2, 2)))


class TestEntityMask:
    """Test mask bounding boxes and unions."""

    def test_bbox(self):
        """Test half-open bounding box."""
        bits = np.zeros((10, 10), dtype=bool)
        bits[2:5, 3:9] = True
        assert EntityMask(bits).bbox == (2, 5, 3, 9)

    def test_empty_bbox(self):
        """Test an empty mask has no bounding box."""
        mask = EntityMask.empty(4, 4)
        assert mask.is_empty
        assert mask.bbox is None

    def test_union_dimension_mismatch(self):
        """Test unions of different resolution raise DimensionError."""
        with pytest.raises(DimensionError):
            EntityMask.empty(4, 4).union(EntityMask.empty(4, 5))


class TestInstanceRecord:
    """Test instance record validation."""

    def test_unknown_category(self):
        """Test an unknown category raises DomainError."""
        with pytest.raises(DomainError):
            InstanceRecord("a", EntityMask.empty(4, 4), category="furniture")

    def test_crop_must_cover_bbox(self):
        """Test crops must match the mask bounding box."""
        bits = np.zeros((8, 8), dtype=bool)
        bits[1:3, 1:4] = True
        with pytest.raises(DimensionError):
            InstanceRecord("a", EntityMask(bits), crop_rgb=np.zeros((3, 3, 3)))
        record = InstanceRecord("a", EntityMask(bits), crop_rgb=np.zeros((2, 3, 3)))
        assert record.is_thing


class TestRasterIO:
    """Test PFM and PNG round trips."""

    def test_pfm_round_trip(self, tmp_path, rng):
        """Test PFM keeps float32 values and row order."""
        values = rng.uniform(0.1, 10.0, size=(5, 7))
        values[0, 0] = np.nan
        write_pfm(tmp_path / "d.pfm", values)
        back = read_pfm(tmp_path / "d.pfm").values
        assert back.shape == (5, 7)
        np.testing.assert_array_equal(back[1:], values[1:].astype(np.float32))
        assert np.isnan(back[0, 0])

    def test_pfm_header_layout(self, tmp_path):
        """Test little-endian scale and bottom-to-top rows."""
        write_pfm(tmp_path / "d.pfm", np.array([[1.0, 2.0], [3.0, 4.0]]))
        data = (tmp_path / "d.pfm").read_bytes()
        assert data.startswith(b"Pf\n2 2\n-1.0\n")
        payload = np.frombuffer(data[len(b"Pf\n2 2\n-1.0\n"):], dtype="<f4")
        assert payload.tolist() == [3.0, 4.0, 1.0, 2.0]

    def test_missing_and_malformed(self, tmp_path):
        """Test missing and malformed depth files raise ingest errors."""
        with pytest.raises(MissingFileError):
            read_pfm(tmp_path / "nope.pfm")
        (tmp_path / "bad.pfm").write_bytes(b"P6\n1 1\n255\n")
        with pytest.raises(SchemaError):
            read_pfm(tmp_path / "bad.pfm")

    def test_neutral_quantizes_to_128(self, tmp_path):
        """Test the neutral fill value is stored as 128."""
        write_image(tmp_path / "n.png", np.full((2, 2, 3), NEUTRAL))
        np.testing.assert_array_equal(read_image(tmp_path / "n.png"), 128 / 255.0)

    def test_mask_round_trip(self, tmp_path):
        """Test masks survive a PNG round trip."""
        bits = np.zeros((6, 6), dtype=bool)
        bits[1, 2] = bits[4, 5] = True
        write_mask(tmp_path / "m.png", bits)
        np.testing.assert_array_equal(read_mask(tmp_path / "m.png").bits, bits)


class TestManifest:
    """Test manifest ingestion and error reporting."""

    def test_load_synthetic_bundle(self, synthetic_bundle):
        """Test a synthesized bundle loads with a ground stuff entity."""
        manifest = load_manifest(synthetic_bundle)
        assert manifest.depth_kind is DepthKind.METRIC
        assert manifest.pose is not None
        ground = manifest.instance("ground")
        assert ground.category is Category.STUFF
        things, stuff = partition_entities(manifest)
        assert things and all(t.is_thing for t in things)
        assert stuff.count == ground.mask.count
        assert manifest.gt_scene_mesh_path.exists()

    def test_crops_cover_mask_bbox(self, synthetic_bundle):
        """Test per-instance crops are cut from the mask bounding box."""
        manifest = load_manifest(synthetic_bundle)
        inst = manifest.instances[0]
        r0, r1, c0, c1 = inst.mask.bbox
        assert inst.crop_rgb.shape == (r1 - r0, c1 - c0, 3)
        assert inst.crop_depth.shape == (r1 - r0, c1 - c0)

    def test_missing_manifest(self, tmp_path):
        """Test a missing manifest raises MissingFileError."""
        with pytest.raises(MissingFileError):
            load_manifest(tmp_path / "manifest.json")

    def test_invalid_json(self, tmp_path):
        """Test unparsable JSON raises SchemaError."""
        (tmp_path / "manifest.json").write_text("{not json", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_manifest(tmp_path / "manifest.json")

    def test_missing_depth_file(self, synthetic_bundle):
        """Test a missing depth file names the depth field."""
        (synthetic_bundle.parent / "depth.pfm").unlink()
        with pytest.raises(MissingFileError) as exc_info:
            load_manifest(synthetic_bundle)
        assert exc_info.value.field_path == "depth"

    def test_schema_error_field_path(self, synthetic_bundle):
        """Test schema violations carry an indexed field path."""
        doc = json.loads(synthetic_bundle.read_text(encoding="utf-8"))
        doc["instances"][1]["category"] = "furniture"
        synthetic_bundle.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(SchemaError) as exc_info:
            load_manifest(synthetic_bundle)
        assert exc_info.value.field_path == "instances[1].category"

    def test_resolution_mismatch_names_instance(self, synthetic_bundle):
        """Test a mask of the wrong size names the offending instance."""
        manifest = load_manifest(synthetic_bundle)
        inst = manifest.instances[0]
        write_mask(synthetic_bundle.parent / f"masks/{inst.instance_id}.png", np.ones((5, 5), dtype=bool))
        with pytest.raises(ResolutionMismatchError) as exc_info:
            load_manifest(synthetic_bundle)
        assert exc_info.value.instance == inst.instance_id
        assert exc_info.value.field_path == "instances[0].mask"

    def test_mask_overlap(self, synthetic_bundle):
        """Test overlapping masks are rejected with the pixel count."""
        manifest = load_manifest(synthetic_bundle)
        first = manifest.instances[0]
        ground_path = synthetic_bundle.parent / "masks/ground.png"
        write_mask(ground_path, manifest.instance("ground").mask.union(first.mask))
        with pytest.raises(MaskOverlapError) as exc_info:
            load_manifest(synthetic_bundle)
        assert exc_info.value.pixel_count == first.mask.count

    def test_duplicate_ids(self, synthetic_bundle):
        """Test duplicate instance ids are rejected."""
        doc = json.loads(synthetic_bundle.read_text(encoding="utf-8"))
        doc["instances"].append(dict(doc["instances"][0]))
        synthetic_bundle.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(SchemaError):
            load_manifest(synthetic_bundle)

    def test_affine_depth_requires_anchor(self, synthetic_bundle):
        """Test affine depth without a metric anchor is rejected."""
        doc = json.loads(synthetic_bundle.read_text(encoding="utf-8"))
        doc["depth_kind"] = "affine"
        synthetic_bundle.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(SchemaError) as exc_info:
            load_manifest(synthetic_bundle)
        assert exc_info.value.field_path == "metric_anchor"

    def test_affine_depth_with_anchor(self, synthetic_bundle):
        """Test affine depth loads with its anchor map."""
        root = synthetic_bundle.parent
        metric = read_pfm(root / "depth.pfm")
        shutil.copy(root / "depth.pfm", root / "anchor.pfm")
        write_pfm(root / "depth.pfm", metric.scaled(0.5, -0.1))
        doc = json.loads(synthetic_bundle.read_text(encoding="utf-8"))
        doc.update(depth_kind="affine", metric_anchor="anchor.pfm")
        synthetic_bundle.write_text(json.dumps(doc), encoding="utf-8")

        manifest = load_manifest(synthetic_bundle)
        assert manifest.depth_kind is DepthKind.AFFINE
        assert manifest.anchor_depth.shape == manifest.depth.shape

    def test_overlap_count(self):
        """Test the overlap count of three masks."""
        a = np.zeros((3, 3), dtype=bool)
        b = np.zeros((3, 3), dtype=bool)
        a[0, :2] = True
        b[0, 1:] = True
        assert mask_overlap_count([EntityMask(a), EntityMask(b), EntityMask.empty(3, 3)]) == 1


class TestScaleShift:
    """Test affine depth alignment."""

    def test_exact_recovery(self, rng):
        """Test noiseless data recovers s and t."""
        anchor = DepthMap(rng.uniform(1.0, 4.0, size=(20, 30)))
        affine = DepthMap((anchor.values - 0.3) / 2.0)
        fit = fit_scale_shift(affine, anchor)
        assert fit.s == pytest.approx(2.0, abs=1e-9)
        assert fit.t == pytest.approx(0.3, abs=1e-9)
        assert fit.residual_rms < 1e-9
        assert fit.warning is None
        np.testing.assert_allclose(fit.apply(affine).values, anchor.values, atol=1e-9)

    def test_jointly_valid_pixels_only(self, rng):
        """Test invalid anchor pixels are ignored."""
        anchor_values = rng.uniform(1.0, 4.0, size=(10, 10))
        affine = DepthMap(3.0 * anchor_values + 1.0)
        anchor_values[:5] = np.nan
        fit = fit_scale_shift(affine, DepthMap(anchor_values))
        assert fit.pixel_count == 50
        assert fit.s == pytest.approx(1.0 / 3.0)

    def test_non_positive_affine_values_used(self):
        """Test zero and negative affine predictions count as long as they are finite."""
        anchor = DepthMap(np.linspace(1.0, 3.0, 12).reshape(3, 4))
        affine_values = anchor.values - 2.0
        affine_values[0, 0] = np.nan
        fit = fit_scale_shift(DepthMap(affine_values), anchor)
        assert fit.pixel_count == 11
        assert fit.s == pytest.approx(1.0, abs=1e-9)
        assert fit.t == pytest.approx(2.0, abs=1e-9)

    def test_constant_affine_depth(self):
        """Test a constant affine map is rank deficient."""
        with pytest.raises(RankDeficiencyError):
            fit_scale_shift(DepthMap(np.ones((4, 4))), DepthMap(np.full((4, 4), 2.0)))

    def test_too_few_pixels(self):
        """Test fewer than two jointly valid pixels is rank deficient."""
        anchor = np.full((3, 3), np.nan)
        anchor[0, 0] = 1.0
        with pytest.raises(RankDeficiencyError):
            fit_scale_shift(DepthMap(np.arange(9.0).reshape(3, 3)), DepthMap(anchor))

    def test_negative_scale_warns(self, rng):
        """Test an inverted relation returns a warning instead of failing."""
        anchor = DepthMap(rng.uniform(1.0, 4.0, size=(6, 6)))
        fit = fit_scale_shift(DepthMap(-anchor.values), anchor)
        assert fit.s < 0
        assert fit.warning is not None

    def test_dimension_mismatch(self):
        """Test maps of different resolution are rejected."""
        with pytest.raises(DimensionError):
            fit_scale_shift(DepthMap(np.ones((2, 2))), DepthMap(np.ones((3, 3))))
