"""Unit tests for the synthetic world: scenes, rendering, tessellation, oracles, amodal pairs and bundles."""

import math

import numpy as np
import pytest

from libs.common.errors import CompositionError, DomainError, GenerationError
from libs.geometry.camera import RigidPose, fov_to_intrinsics, project
from libs.scene.manifest import load_manifest
from libs.scene.types import NEUTRAL, Category, EntityMask
from libs.synth.amodal import (
    PairRecord,
    audit_pair_files,
    compose_amodal_pair,
    object_view,
    random_object,
    read_index,
    write_index,
    write_pair,
)
from libs.synth.bundle import MIN_VISIBLE_PIXELS, synthesize
from libs.synth.oracle import PerturbationRanges, perturb_reconstruction
from libs.synth.primitives import GROUND_ID, Primitive, PrimitiveScene, SceneSpec, generate_scene
from libs.synth.render import raycast_render
from libs.synth.tessellate import box, mesh_of_primitive, uv_sphere, visible_ground


def axis_scene(*primitives: Primitive) -> PrimitiveScene:
    """Identity camera with an odd image size, so the centre pixel looks along +z."""
    return PrimitiveScene(list(primitives), fov_to_intrinsics(40.0, 33, 33), RigidPose.identity())


class TestSceneGeneration:
    """Test seeded primitive scenes."""

    def test_deterministic(self):
        """Test the same seed yields the same scene."""
        a = generate_scene(7)
        b = generate_scene(7)
        assert [p.model_dump() for p in a.primitives] == [p.model_dump() for p in b.primitives]
        np.testing.assert_array_equal(a.pose.rotation, b.pose.rotation)

    def test_things_rest_on_ground_apart(self):
        """Test things touch the ground and their footprints do not overlap."""
        spec = SceneSpec(things=5)
        scene = generate_scene(3, spec)
        things = scene.things
        assert len(things) == 5
        for p in things:
            assert p.center[1] == pytest.approx(p.size[1])
        for i, a in enumerate(things):
            for b in things[i + 1:]:
                gap = math.hypot(a.center[0] - b.center[0], a.center[2] - b.center[2])
                assert gap >= a.footprint_radius + b.footprint_radius + spec.min_gap

    def test_centres_inside_image(self):
        """Test every thing centre projects inside the image margin."""
        scene = generate_scene(11, SceneSpec(things=4))
        proj = project(np.array([p.center for p in scene.things]), scene.intr, scene.pose)
        assert not proj.behind.any()
        assert np.all((proj.uv[:, 0] > 0) & (proj.uv[:, 0] < scene.intr.width))
        assert np.all((proj.uv[:, 1] > 0) & (proj.uv[:, 1] < scene.intr.height))

    def test_zero_things(self):
        """Test a scene without things is just the ground."""
        scene = generate_scene(0, SceneSpec(things=0, width=32, height=24))
        assert [p.id for p in scene.primitives] == [GROUND_ID]
        assert scene.primitives[0].category is Category.STUFF
        assert raycast_render(scene).coverage.count == 32 * 24

    def test_impossible_density(self):
        """Test overcrowded specs raise GenerationError."""
        spec = SceneSpec(things=20, region_radius=0.1, size_min=0.1, size_max=0.15, max_attempts=50)
        with pytest.raises(GenerationError):
            generate_scene(0, spec)

    def test_invalid_size_range(self):
        """Test size_min above size_max is rejected."""
        with pytest.raises(ValueError):
            SceneSpec(size_min=0.3, size_max=0.1)


class TestRaycastRender:
    """Test analytic rendering against closed-form depths."""

    def test_sphere_depth(self):
        """Test the on-axis pixel of a sphere at distance d sees d - r."""
        render = raycast_render(axis_scene(Primitive(id="s", kind="sphere", center=(0, 0, 3), size=(1, 1, 1))))
        assert render.depth.values[16, 16] == pytest.approx(2.0, abs=1e-12)
        assert np.isnan(render.depth.values[0, 0])
        assert render.instance_ids[0, 0] == -1
        np.testing.assert_array_equal(render.rgb[0, 0], NEUTRAL)

    def test_box_face_depth(self):
        """Test a box facing the camera has constant depth over its front face."""
        render = raycast_render(axis_scene(Primitive(id="b", kind="box", center=(0, 0, 3), size=(0.5, 0.5, 0.5))))
        hit = render.mask("b").bits
        assert hit.any()
        np.testing.assert_allclose(render.depth.values[hit], 2.5, atol=1e-12)

    def test_plane_depth(self):
        """Test rays meet a horizontal plane at the expected ray parameter."""
        scene = axis_scene(Primitive(id="p", kind="plane", center=(0, 1, 0), size=(50, 0, 50),
                                     category=Category.STUFF))
        render = raycast_render(scene)
        intr = scene.intr
        row = 30
        dy = (row + 0.5 - intr.cy) / intr.fy
        assert render.depth.values[row, 16] == pytest.approx(1.0 / dy, rel=1e-9)
        assert np.isnan(render.depth.values[2, 16])

    def test_nearest_hit_wins(self):
        """Test a sphere in front of a box hides it on the optical axis."""
        render = raycast_render(axis_scene(
            Primitive(id="b", kind="box", center=(0, 0, 5), size=(1, 1, 1)),
            Primitive(id="s", kind="sphere", center=(0, 0, 3), size=(0.5, 0.5, 0.5)),
        ))
        assert render.ids[render.instance_ids[16, 16]] == "s"

    def test_independent_of_workers(self):
        """Test block-parallel rendering gives identical output."""
        scene = generate_scene(5, SceneSpec(things=3, width=64, height=48))
        one = raycast_render(scene, jobs=1)
        many = raycast_render(scene, jobs=4)
        np.testing.assert_array_equal(one.depth.values, many.depth.values)
        np.testing.assert_array_equal(one.instance_ids, many.instance_ids)

    def test_invalid_size(self):
        """Test a zero-radius sphere raises DomainError."""
        with pytest.raises(DomainError):
            raycast_render(axis_scene(Primitive(id="s", kind="sphere", center=(0, 0, 3), size=(0, 0, 0))))


class TestTessellation:
    """Test ground-truth meshes of primitives."""

    def test_sphere_area(self):
        """Test a finely tessellated sphere approaches 4 pi r^2."""
        mesh = uv_sphere(1.0, 64)
        assert mesh.area() == pytest.approx(4.0 * math.pi, rel=0.005)
        assert np.all(mesh.edge_face_counts() == 2)

    def test_box_area(self):
        """Test box surface area."""
        assert box((0.5, 1.0, 1.5)).area() == pytest.approx(22.0)

    def test_yawed_box_keeps_shape(self):
        """Test the world pose rotates without distorting."""
        prim = Primitive(id="b", kind="box", center=(1, 0.2, -1), size=(0.1, 0.2, 0.3), yaw=0.7)
        mesh = mesh_of_primitive(prim)
        assert mesh.area() == pytest.approx(box((0.1, 0.2, 0.3)).area())
        np.testing.assert_allclose(mesh.vertices.mean(axis=0), [1, 0.2, -1], atol=1e-12)

    def test_low_tessellation(self):
        """Test sphere tessellation below 8 is rejected."""
        with pytest.raises(DomainError):
            uv_sphere(1.0, 4)

    def test_visible_ground_in_view(self):
        """Test ground faces kept for the bundle lie inside the image."""
        scene = generate_scene(2, SceneSpec(things=0, width=64, height=48))
        ground = scene.primitive(GROUND_ID)
        mesh = visible_ground(ground, scene.intr, scene.pose, depth_limit=10.0, tessellation=16)
        assert not mesh.is_empty
        proj = project(mesh.triangles().mean(axis=1), scene.intr, scene.pose)
        assert not proj.behind.any()
        assert np.all((proj.uv[:, 0] >= 0) & (proj.uv[:, 0] <= 64))
        np.testing.assert_allclose(mesh.vertices[:, 1], 0.0, atol=1e-12)


class TestOracle:
    """Test seeded oracle perturbations."""

    def test_identity_ranges(self, unit_cube):
        """Test default ranges leave the mesh untouched."""
        mesh, applied = perturb_reconstruction(unit_cube, seed=1)
        np.testing.assert_array_equal(mesh.vertices, unit_cube.vertices)
        assert applied.scale == 1.0

    def test_inverse_recovers_mesh(self, unit_sphere):
        """Test the returned transform maps the perturbed mesh back."""
        ranges = PerturbationRanges(scale_min=0.2, scale_max=5.0, rotation_deg=30.0, translation=0.5)
        mesh, applied = perturb_reconstruction(unit_sphere, seed=9, ranges=ranges)
        assert 0.2 <= applied.scale <= 5.0
        np.testing.assert_allclose(applied.inverse().apply(mesh.vertices), unit_sphere.vertices, atol=1e-9)

    def test_seeded(self, unit_sphere):
        """Test the same seed draws the same perturbation."""
        ranges = PerturbationRanges(scale_min=0.5, scale_max=2.0, noise=0.01)
        a, _ = perturb_reconstruction(unit_sphere, seed=4, ranges=ranges)
        b, _ = perturb_reconstruction(unit_sphere, seed=4, ranges=ranges)
        np.testing.assert_array_equal(a.vertices, b.vertices)

    def test_invalid_range(self):
        """Test scale_min above scale_max is rejected."""
        with pytest.raises(ValueError):
            PerturbationRanges(scale_min=2.0, scale_max=1.0)


class TestAmodalPairs:
    """Test amodal completion training pairs."""

    @pytest.fixture
    def views(self):
        rng = np.random.default_rng(0)
        target = object_view(random_object(rng, "obj_t"), 64)
        occluder = object_view(random_object(rng, "obj_o"), 64)
        return target, occluder

    def test_object_view(self, views):
        """Test an object view is centred on a neutral background."""
        (rgb, mask), _ = views
        assert mask.count > 100
        r0, r1, c0, c1 = mask.bbox
        assert r0 > 0 and c0 > 0 and r1 < 64 and c1 < 64
        np.testing.assert_array_equal(rgb[~mask.bits], NEUTRAL)

    def test_random_object_ranges(self):
        """Test sampled objects stay within their size ranges."""
        rng = np.random.default_rng(5)
        for i in range(20):
            prim = random_object(rng, f"o{i}")
            if prim.kind == "sphere":
                assert 0.5 <= prim.size[0] <= 1.0
            else:
                assert all(0.3 <= s <= 0.8 for s in prim.size)

    def test_composition_invariants(self, views):
        """Test the occluded share and the conditioning/target relation."""
        (rgb, mask), (_, sil) = views
        pair = compose_amodal_pair(rgb, mask, sil, seed=3, occlusion_range=(0.1, 0.5))

        occluded = pair.occluder.bits & mask.bits
        assert 0.1 <= pair.occluded_fraction <= 0.5
        assert pair.occluded_fraction == pytest.approx(occluded.sum() / mask.count)
        np.testing.assert_array_equal(pair.conditioning[pair.occluder.bits], NEUTRAL)
        np.testing.assert_array_equal(pair.conditioning[~pair.occluder.bits], pair.target[~pair.occluder.bits])
        np.testing.assert_array_equal(pair.target[~mask.bits], NEUTRAL)

    def test_composition_seeded(self, views):
        """Test the same seed places the occluder identically."""
        (rgb, mask), (_, sil) = views
        a = compose_amodal_pair(rgb, mask, sil, seed=8)
        b = compose_amodal_pair(rgb, mask, sil, seed=8)
        np.testing.assert_array_equal(a.occluder.bits, b.occluder.bits)

    def test_occluded_share_spread_across_seeds(self, views):
        """Test seeds spread the occluded share over the range rather than one value."""
        (rgb, mask), (_, sil) = views
        shares = np.array([compose_amodal_pair(rgb, mask, sil, seed=s, occlusion_range=(0.1, 0.5)).occluded_fraction
                           for s in range(40)])
        assert np.all((shares >= 0.1) & (shares <= 0.5))
        assert shares.std() > 0.05
        assert np.ptp(shares) > 0.15
        assert np.mean(np.abs(shares - 0.3) < 0.02) < 0.5

    def test_empty_silhouette(self, views):
        """Test an empty silhouette only satisfies a range that admits zero."""
        (rgb, mask), _ = views
        empty = EntityMask.empty(*mask.shape)
        pair = compose_amodal_pair(rgb, mask, empty, seed=0, occlusion_range=(0.0, 0.3))
        assert pair.occluded_fraction == 0.0
        with pytest.raises(CompositionError):
            compose_amodal_pair(rgb, mask, empty, seed=0, occlusion_range=(0.1, 0.3))

    def test_unreachable_range(self, views):
        """Test a range no placement can hit raises CompositionError."""
        (rgb, mask), (_, sil) = views
        with pytest.raises(CompositionError):
            compose_amodal_pair(rgb, mask, sil, seed=0, occlusion_range=(0.0, 0.0), max_tries=3)

    def test_invalid_inputs(self, views):
        """Test bad ranges and empty targets raise DomainError."""
        (rgb, mask), (_, sil) = views
        with pytest.raises(DomainError):
            compose_amodal_pair(rgb, mask, sil, seed=0, occlusion_range=(0.6, 0.2))
        with pytest.raises(DomainError):
            compose_amodal_pair(rgb, EntityMask.empty(*mask.shape), sil, seed=0)

    def test_written_pairs_pass_audit(self, tmp_path, views):
        """Test stored pairs satisfy the neutral-or-target rule and the index round trips."""
        (rgb, mask), (_, sil) = views
        pair = compose_amodal_pair(rgb, mask, sil, seed=1, prompt="sphere")
        paths = write_pair(tmp_path, "obj_t__obj_o", pair)
        record = PairRecord(pair="obj_t__obj_o", prompt=pair.prompt, seed=pair.seed,
                            occluded_fraction=pair.occluded_fraction, target_id="obj_t",
                            occluder_id="obj_o", **paths)
        write_index(tmp_path, [record])

        records = read_index(tmp_path)
        assert records == [record]
        assert audit_pair_files(tmp_path, records[0]) == 0


class TestBundle:
    """Test synthetic scene bundles."""

    def test_byte_identical(self, tmp_path, test_settings):
        """Test two runs with one seed write identical files."""
        a = synthesize(tmp_path / "a", seed=4, things=2, synth=test_settings.synth, camera=test_settings.camera)
        b = synthesize(tmp_path / "b", seed=4, things=2, synth=test_settings.synth, camera=test_settings.camera)
        files_a = sorted(p.relative_to(a.parent) for p in a.parent.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b.parent) for p in b.parent.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (a.parent / rel).read_bytes() == (b.parent / rel).read_bytes(), rel

    def test_bundle_contents(self, synthetic_bundle):
        """Test the manifest lists visible things with oracle products and the ground."""
        manifest = load_manifest(synthetic_bundle)
        ids = [inst.instance_id for inst in manifest.instances]
        assert GROUND_ID in ids
        things = [inst for inst in manifest.instances if inst.is_thing]
        assert 1 <= len(things) <= 2
        for inst in things:
            assert inst.mask.count >= MIN_VISIBLE_PIXELS
            assert inst.recon_mesh_path.exists()
            assert inst.gt_mesh_path.exists()
            assert inst.amodal_rgb_path.exists()
        assert manifest.gt_scene_mesh_path.exists()
        assert (synthetic_bundle.parent / "scene.json").exists()
