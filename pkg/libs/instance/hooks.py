# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Completion and reconstruction hooks.

Hooks stand in for the neural stages of the pipeline. File-based oracle modes
read stored results; external_command modes run a user process on a
temporary directory holding the crop (``crop.png``, ``mask.png``) and a JSON
sidecar (``crop.json``: label, instance id, crop resolution, camera). The
process must write its result to the declared output filename in the same
directory; any non-zero exit is an error.
"""

import json
import logging
import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field
from scipy.ndimage import binary_dilation

from libs.common.config import SynthSettings, derive_seed
from libs.common.errors import CompletionError, ReconstructionError, SceneKitError
from libs.geometry.camera import CameraIntrinsics, project, unproject
from libs.instance.reprojection import NormalizedCrop, SceneView, amodal_mask
from libs.mesh.io import load_mesh
from libs.mesh.types import TriangleMesh
from libs.scene.io import read_image, read_pfm, write_image, write_mask
from libs.scene.types import InstanceRecord
from libs.synth.oracle import PerturbationRanges, perturb_reconstruction

logger = logging.getLogger(__name__)

CARVE_DILATION_PX = 2
CARVE_EDGE_PX = 2.0
CARVE_MAX_FACES = 200_000


def _refine_for_carving(mesh: TriangleMesh, points_capture: np.ndarray,
                        intr: CameraIntrinsics) -> TriangleMesh:
    """Subdivide until projected edges in the capture image are at most CARVE_EDGE_PX long"""

    while mesh.n_faces * 4 <= CARVE_MAX_FACES:
        proj = project(points_capture, intr)
        edges = mesh.edges()
        front = ~(proj.behind[edges[:, 0]] | proj.behind[edges[:, 1]])
        if not front.any():
            break
        lengths = np.linalg.norm(proj.uv[edges[front, 0]] - proj.uv[edges[front, 1]], axis=1)
        if lengths.max() <= CARVE_EDGE_PX:
            break
        mesh = mesh.subdivided()
        points_capture = np.concatenate([points_capture, points_capture[edges].mean(axis=1)])
    return mesh


class CompletionHook(BaseModel):
    """How the full view of a partially visible instance is obtained"""

    mode: Literal["identity", "oracle_file", "external_command"] = "identity"
    path: str | None = None
    command: str | None = None
    output_name: str = "completed.png"
    timeout: float = Field(default=600.0, gt=0)


class ReconstructionHook(BaseModel):
    """How an object mesh is obtained from a completed crop"""

    mode: Literal["oracle_mesh", "external_command", "oracle_view"] = "oracle_mesh"
    path: str | None = None
    command: str | None = None
    output_name: str = "mesh.obj"
    timeout: float = Field(default=3600.0, gt=0)


def _write_crop_dir(directory: Path, crop: NormalizedCrop, label: str, instance_id: str) -> None:
    write_image(directory / "crop.png", crop.rgb)
    write_mask(directory / "mask.png", crop.mask)
    sidecar = {
        "label": label,
        "instance_id": instance_id,
        "crop_res": crop.resolution,
        "mode": crop.mode,
        "camera": crop.camera.to_dict(),
    }
    (directory / "crop.json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")


def _run_command(command: str, directory: Path, timeout: float, error_cls, stage: str):
    if "{dir}" in command:
        args = shlex.split(command.replace("{dir}", shlex.quote(str(directory))))
    else:
        args = shlex.split(command) + [str(directory)]

    logger.info(f"Invoking {stage} hook: {args[0]} on {directory}")
    try:
        proc = subprocess.run(args, capture_output=True, text=True, timeout=timeout, check=False)
    except FileNotFoundError as e:
        raise error_cls(f"{stage} command not found: {e}", None, "", "")
    except subprocess.TimeoutExpired:
        raise error_cls(f"{stage} command timed out after {timeout}s", None, "", "")

    if proc.returncode != 0:
        raise error_cls(
            f"{stage} command exited with status {proc.returncode}",
            proc.returncode, proc.stdout or "", proc.stderr or "",
        )
    return proc


def complete_crop(crop: NormalizedCrop, label: str, hook: CompletionHook,
                  instance: InstanceRecord | None = None, scene: SceneView | None = None,
                  operator=None) -> NormalizedCrop:
    """
    Full-object view of the crop. The identity hook returns the crop itself;
    every other mode recomputes the mask from the completed colors.
    """

    if hook.mode == "identity":
        return crop

    instance_id = instance.instance_id if instance is not None else ""

    if hook.mode == "oracle_file":
        crop_file = Path(hook.path) if hook.path else (instance.completion_path if instance else None)
        if crop_file is not None:
            rgb = read_image(crop_file)
        elif instance is not None and instance.amodal_rgb_path and instance.amodal_depth_path:
            if scene is None or operator is None:
                raise CompletionError("Scene-frame completion needs the scene view and crop operator")
            amodal_rgb = read_image(instance.amodal_rgb_path)
            amodal_depth = read_pfm(instance.amodal_depth_path)
            cloud = unproject(amodal_depth, scene.intr, colors=amodal_rgb)
            rgb, _, _ = operator.splat(cloud, crop.camera, scene.intr, crop.source_bbox)
        else:
            raise CompletionError(f"No stored completion for instance '{instance_id}'")
        logger.info(f"Completion oracle for '{instance_id}' loaded")

    else:
        if not hook.command:
            raise CompletionError("external_command completion requires a command")
        with tempfile.TemporaryDirectory(prefix="scenekit-complete-") as tmp:
            directory = Path(tmp)
            _write_crop_dir(directory, crop, label, instance_id)
            proc = _run_command(hook.command, directory, hook.timeout, CompletionError, "completion")
            output = directory / hook.output_name
            if not output.exists():
                raise CompletionError(f"Completion command did not write {hook.output_name}",
                                      proc.returncode, proc.stdout, proc.stderr)
            try:
                rgb = read_image(output)
            except (OSError, SceneKitError) as e:
                raise CompletionError(f"Unreadable completion output: {e}", proc.returncode,
                                      proc.stdout, proc.stderr)

    if rgb.shape[:2] != (crop.resolution, crop.resolution):
        raise CompletionError(
            f"Completed crop is {rgb.shape[1]}x{rgb.shape[0]}, expected {crop.resolution}x{crop.resolution}"
        )
    return crop.replace(rgb, amodal_mask(rgb))


def _validate_recon(mesh: TriangleMesh, instance_id: str) -> TriangleMesh:
    if mesh.is_empty:
        raise ReconstructionError(f"Reconstruction of '{instance_id}' has no faces")
    if not np.all(np.isfinite(mesh.vertices)):
        raise ReconstructionError(f"Reconstruction of '{instance_id}' has non-finite vertices")
    return mesh


def _load_recon(path: Path, instance_id: str) -> TriangleMesh:
    try:
        return load_mesh(path)
    except SceneKitError as e:
        raise ReconstructionError(f"Invalid reconstruction for '{instance_id}': {e.message}",
                                  {"path": str(path)})


def view_oracle(crop: NormalizedCrop, gt_mesh: TriangleMesh, ranges: PerturbationRanges,
                seed: int) -> TriangleMesh:
    """
    Simulated single-view reconstructor: the part of the ground-truth object
    seen inside the completed crop silhouette, as the virtual camera would
    interpret the crop, at an arbitrary scale.
    """

    capture = crop.capture
    res = crop.resolution
    silhouette = binary_dilation(crop.mask.bits, iterations=CARVE_DILATION_PX)

    def inside(points_capture: np.ndarray) -> np.ndarray:
        proj = project(points_capture, capture.intr)
        ok = ~proj.behind
        uv = np.where(ok[:, None], proj.uv, -1.0)
        cols = np.floor(uv[:, 0]).astype(np.int64)
        rows = np.floor(uv[:, 1]).astype(np.int64)
        ok &= (cols >= 0) & (cols < res) & (rows >= 0) & (rows < res)
        result = np.zeros(len(points_capture), dtype=bool)
        result[ok] = silhouette[rows[ok], cols[ok]]
        return result

    vc = capture.transform.apply(gt_mesh.vertices)
    gt_mesh = _refine_for_carving(gt_mesh, vc, capture.intr)
    vc = capture.transform.apply(gt_mesh.vertices)
    in_front = ~project(vc, capture.intr).behind
    keep = in_front[gt_mesh.faces].all(axis=1) & inside(vc[gt_mesh.faces].mean(axis=1))
    if not keep.any():
        raise ReconstructionError("Crop silhouette does not cover any ground-truth face")

    carved = TriangleMesh(gt_mesh.vertices, gt_mesh.faces, gt_mesh.vertex_colors).submesh(keep)
    assumed = crop.camera.forward.apply(carved.vertices)
    if crop.mode != "reprojection":
        # Re-interpret capture pixels through the virtual camera intrinsics
        proj = project(capture.transform.apply(carved.vertices), capture.intr)
        z = assumed[:, 2]
        intr = crop.camera.intr
        assumed = np.stack([
            (proj.uv[:, 0] - intr.cx) * z / intr.fx,
            (proj.uv[:, 1] - intr.cy) * z / intr.fy,
            z,
        ], axis=1)

    mesh, _ = perturb_reconstruction(carved.with_vertices(assumed), seed, ranges)
    return mesh


def reconstruct_object(crop: NormalizedCrop, hook: ReconstructionHook,
                       instance: InstanceRecord | None = None, label: str = "",
                       seed: int = 0, synth: SynthSettings | None = None) -> TriangleMesh:
    """Object mesh in the virtual camera frame, at an arbitrary scale"""

    instance_id = instance.instance_id if instance is not None else ""

    if hook.mode == "oracle_mesh":
        path = Path(hook.path) if hook.path else (instance.recon_mesh_path if instance else None)
        if path is None:
            raise ReconstructionError(f"No stored reconstruction for instance '{instance_id}'")
        mesh = _load_recon(path, instance_id)

    elif hook.mode == "oracle_view":
        if instance is None or instance.gt_mesh_path is None:
            raise ReconstructionError(f"View oracle needs a ground-truth mesh for '{instance_id}'")
        synth = synth or SynthSettings()
        ranges = PerturbationRanges(
            scale_min=synth.perturb_scale_min,
            scale_max=synth.perturb_scale_max,
            noise=synth.perturb_noise,
        )
        gt = _load_recon(instance.gt_mesh_path, instance_id)
        mesh = view_oracle(crop, gt, ranges, derive_seed(seed, f"oracle:{instance_id}"))

    else:
        if not hook.command:
            raise ReconstructionError("external_command reconstruction requires a command")
        with tempfile.TemporaryDirectory(prefix="scenekit-recon-") as tmp:
            directory = Path(tmp)
            _write_crop_dir(directory, crop, label, instance_id)
            try:
                _run_command(hook.command, directory, hook.timeout, CompletionError, "reconstruction")
            except CompletionError as e:
                raise ReconstructionError(e.message, e.details)
            output = directory / hook.output_name
            if not output.exists():
                raise ReconstructionError(f"Reconstruction command did not write {hook.output_name}")
            mesh = _load_recon(output, instance_id)

    logger.info(f"Reconstruction for '{instance_id}' ({hook.mode}): {mesh.n_vertices} vertices")
    return _validate_recon(mesh, instance_id)
