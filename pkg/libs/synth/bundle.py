# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Synthetic scene bundles.

A bundle is a directory the reconstruction pipeline ingests unchanged:

    image.png, depth.pfm          rendered view (metric depth)
    masks/<id>.png                exact entity masks from the id map
    gt/<id>.obj, gt/scene.obj     ground-truth meshes in view space
    recon/<id>.obj                oracle reconstructions in the virtual camera frame
    amodal/<id>.png, <id>.pfm     unoccluded render of each thing
    scene.json                    the generated primitives
    manifest.json
"""

import json
import logging
from pathlib import Path

import numpy as np

from libs.common.config import CameraSettings, SynthSettings, derive_seed
from libs.geometry.camera import fit_virtual_camera, unproject
from libs.mesh.io import save_mesh, write_scene
from libs.mesh.types import TriangleMesh, merge_scene
from libs.scene.io import write_image, write_mask, write_pfm
from libs.scene.manifest import (
    CameraEntry,
    GroundTruthEntry,
    InstanceEntry,
    ManifestDocument,
    PoseEntry,
)
from libs.scene.types import Category, DepthMap
from libs.synth.oracle import PerturbationRanges, perturb_reconstruction
from libs.synth.primitives import PrimitiveScene, SceneSpec, generate_scene
from libs.synth.render import raycast_render
from libs.synth.tessellate import mesh_of_primitive, visible_ground

logger = logging.getLogger(__name__)

MIN_VISIBLE_PIXELS = 16


def scene_spec(synth: SynthSettings, things: int) -> SceneSpec:
    return SceneSpec(
        things=things,
        width=synth.width,
        height=synth.height,
        fov_deg=synth.fov_deg,
        max_attempts=synth.max_attempts,
    )


def _stored_depth(depth: DepthMap) -> DepthMap:
    """Depth exactly as it reads back from a float32 PFM"""
    return DepthMap(depth.values.astype(np.float32).astype(np.float64))


def write_bundle(out_dir: str | Path, scene: PrimitiveScene, synth: SynthSettings | None = None,
                 camera: CameraSettings | None = None, jobs: int = 1) -> Path:
    """Render a scene and write every bundle artifact; returns the manifest path"""

    synth = synth or SynthSettings()
    camera = camera or CameraSettings()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    render = raycast_render(scene, jobs)
    depth = _stored_depth(render.depth)
    write_image(out / "image.png", render.rgb)
    write_pfm(out / "depth.pfm", depth)

    ranges = PerturbationRanges(
        scale_min=synth.perturb_scale_min,
        scale_max=synth.perturb_scale_max,
        noise=synth.perturb_noise,
    )

    entries: list[InstanceEntry] = []
    gt_meshes: list[TriangleMesh] = []
    gt_ids: list[str] = []
    gt_kinds: list[str] = []

    for prim in scene.primitives:
        mask = render.mask(prim.id)
        is_thing = prim.category is Category.THING
        if mask.count < (MIN_VISIBLE_PIXELS if is_thing else 1):
            logger.warning(f"Primitive '{prim.id}' covers {mask.count} pixels; left out of the bundle")
            continue

        color = np.asarray(prim.albedo, dtype=np.float64)
        if is_thing:
            world = mesh_of_primitive(prim, synth.sphere_tessellation)
        else:
            depth_limit = float(np.nanmax(np.where(mask.bits, depth.values, np.nan))) * 1.01
            world = visible_ground(prim, scene.intr, scene.pose, depth_limit, synth.plane_tessellation)
        gt = TriangleMesh(scene.pose.apply(world.vertices), world.faces,
                          np.tile(color, (world.n_vertices, 1)))

        entry = InstanceEntry(
            id=prim.id,
            label=prim.label if is_thing else prim.id,
            category=prim.category,
            mask=f"masks/{prim.id}.png",
            gt_mesh=f"gt/{prim.id}.obj",
        )
        write_mask(out / entry.mask, mask)
        save_mesh(out / entry.gt_mesh, gt)

        if is_thing:
            cloud = unproject(depth, scene.intr, mask)
            vc = fit_virtual_camera(cloud, camera.crop_res, camera.crop_fov_deg, camera.crop_distance)
            recon, applied = perturb_reconstruction(
                gt.with_vertices(vc.forward.apply(gt.vertices)),
                derive_seed(scene.seed, f"recon:{prim.id}"),
                ranges,
            )
            entry.recon_mesh = f"recon/{prim.id}.obj"
            save_mesh(out / entry.recon_mesh, recon)

            alone = raycast_render(scene.only(prim.id), jobs)
            entry.amodal_rgb = f"amodal/{prim.id}.png"
            entry.amodal_depth = f"amodal/{prim.id}.pfm"
            write_image(out / entry.amodal_rgb, alone.rgb)
            write_pfm(out / entry.amodal_depth, alone.depth)
            logger.debug(f"Oracle reconstruction of '{prim.id}' at scale {applied.scale:.4g}")

        entries.append(entry)
        gt_meshes.append(gt)
        gt_ids.append(prim.id)
        gt_kinds.append("thing" if is_thing else "background")

    scene_gt = merge_scene(gt_meshes, gt_ids, gt_kinds, gt_ids)
    write_scene(out / "gt", scene_gt, name="scene")

    description = {
        "seed": scene.seed,
        "primitives": [p.model_dump(mode="json") for p in scene.primitives],
        "intrinsics": scene.intr.model_dump(),
        "pose": scene.pose.to_dict(),
    }
    (out / "scene.json").write_text(json.dumps(description, indent=2) + "\n", encoding="utf-8")

    document = ManifestDocument(
        image="image.png",
        depth="depth.pfm",
        camera=CameraEntry(
            intrinsics=scene.intr,
            pose=PoseEntry(rotation=scene.pose.rotation.tolist(), translation=scene.pose.translation.tolist()),
        ),
        instances=entries,
        ground_truth=GroundTruthEntry(scene_mesh="gt/scene.obj"),
    )
    manifest_path = out / "manifest.json"
    document.write(manifest_path)
    logger.info(f"Wrote bundle {out} with {len(entries)} entities")
    return manifest_path


def synthesize(out_dir: str | Path, seed: int, things: int = 3, synth: SynthSettings | None = None,
               camera: CameraSettings | None = None, jobs: int = 1) -> Path:
    """Generate, render and write one seeded scene"""

    synth = synth or SynthSettings()
    scene = generate_scene(seed, scene_spec(synth, things))
    return write_bundle(out_dir, scene, synth, camera, jobs)
