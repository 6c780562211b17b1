# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Scene manifest ingestion.

A manifest is a UTF-8 JSON document binding the image, depth map, entity masks,
external reconstructions and camera of one pipeline run. All paths are
relative to the manifest file. Every violation is reported with the path of
the offending field, e.g. ``instances[2].mask``.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from libs.common.errors import (
    DimensionError,
    MaskOverlapError,
    MissingFileError,
    ResolutionMismatchError,
    SchemaError,
)
from libs.geometry.camera import CameraIntrinsics, RigidPose
from libs.scene.io import read_image, read_mask, read_pfm
from libs.scene.types import Category, DepthMap, EntityMask, InstanceRecord

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = "1.0"


class DepthKind(str, Enum):
    METRIC = "metric"
    AFFINE = "affine"


class PoseEntry(BaseModel):
    rotation: list[list[float]]
    translation: list[float]


class CameraEntry(BaseModel):
    intrinsics: CameraIntrinsics
    pose: PoseEntry | None = None


class InstanceEntry(BaseModel):
    """One entity of the manifest"""

    id: str = Field(min_length=1)
    label: str = ""
    category: Category
    mask: str
    recon_mesh: str | None = None
    gt_mesh: str | None = None
    amodal_rgb: str | None = None
    amodal_depth: str | None = None
    completion: str | None = None


class GroundTruthEntry(BaseModel):
    scene_mesh: str | None = None


class ManifestDocument(BaseModel):
    """On-disk manifest schema"""

    schema_version: str = MANIFEST_SCHEMA_VERSION
    units: str = "m"
    image: str
    depth: str
    depth_kind: DepthKind = DepthKind.METRIC
    metric_anchor: str | None = None
    camera: CameraEntry
    instances: list[InstanceEntry] = Field(default_factory=list)
    ground_truth: GroundTruthEntry = Field(default_factory=GroundTruthEntry)

    @field_validator("schema_version")
    @classmethod
    def validate_schema_version(cls, v: str) -> str:
        if v.split(".")[0] != MANIFEST_SCHEMA_VERSION.split(".")[0]:
            raise ValueError(f"Unsupported manifest schema version {v}")
        return v

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")


class SceneManifest:
    """A fully loaded and validated manifest"""

    def __init__(self, path: Path, document: ManifestDocument, image: np.ndarray, depth: DepthMap,
                 intr: CameraIntrinsics, pose: RigidPose | None, instances: list[InstanceRecord],
                 anchor_depth: DepthMap | None = None):
        self.path = path
        self.root = path.parent
        self.document = document
        self.image = image
        self.depth = depth
        self.intr = intr
        self.pose = pose
        self.instances = instances
        self.anchor_depth = anchor_depth

    def __repr__(self):
        return f"SceneManifest(path='{self.path}', instances={len(self.instances)})"

    @property
    def depth_kind(self) -> DepthKind:
        return self.document.depth_kind

    @property
    def units(self) -> str:
        return self.document.units

    @property
    def image_path(self) -> Path:
        return self.root / self.document.image

    @property
    def depth_path(self) -> Path:
        return self.root / self.document.depth

    @property
    def metric_anchor_path(self) -> Path | None:
        anchor = self.document.metric_anchor
        return None if anchor is None else self.root / anchor

    @property
    def gt_scene_mesh_path(self) -> Path | None:
        mesh = self.document.ground_truth.scene_mesh
        return None if mesh is None else self.root / mesh

    def instance(self, instance_id: str) -> InstanceRecord:
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst
        raise KeyError(instance_id)


def _field_path(loc: tuple[Any, ...]) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts)


def _resolve(root: Path, relative: str | None, field_path: str) -> Path | None:
    if relative is None:
        return None
    path = root / relative
    if not path.exists():
        raise MissingFileError(f"Referenced file not found: {relative}", field_path)
    return path


def load_manifest(path: str | Path) -> SceneManifest:
    """Parse, resolve and validate a scene manifest"""

    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Manifest not found: {path}", "")

    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SchemaError(f"Manifest is not valid JSON: {e}", "")

    try:
        doc = ManifestDocument.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field_path = _field_path(tuple(first["loc"]))
        raise SchemaError(f"Invalid manifest field {field_path}: {first['msg']}", field_path,
                          {"errors": len(e.errors())})

    root = path.parent
    intr = doc.camera.intrinsics

    image_path = _resolve(root, doc.image, "image")
    depth_path = _resolve(root, doc.depth, "depth")
    image = read_image(image_path)
    depth = read_pfm(depth_path)

    if image.shape[:2] != intr.shape:
        raise ResolutionMismatchError(
            f"Image {image.shape[1]}x{image.shape[0]} does not match intrinsics {intr.width}x{intr.height}",
            "image",
        )
    if depth.shape != intr.shape:
        raise ResolutionMismatchError(
            f"Depth {depth.width}x{depth.height} does not match intrinsics {intr.width}x{intr.height}",
            "depth",
        )

    anchor_depth = None
    if doc.depth_kind is DepthKind.AFFINE and doc.metric_anchor is None:
        raise SchemaError("Affine depth requires a metric_anchor depth map", "metric_anchor")
    if doc.metric_anchor is not None:
        anchor_depth = read_pfm(_resolve(root, doc.metric_anchor, "metric_anchor"))
        if anchor_depth.shape != depth.shape:
            raise ResolutionMismatchError("Anchor depth resolution does not match depth", "metric_anchor")

    pose = None
    if doc.camera.pose is not None:
        try:
            pose = RigidPose(np.array(doc.camera.pose.rotation), np.array(doc.camera.pose.translation))
        except (ValueError, DimensionError) as e:
            raise SchemaError(f"Invalid camera pose: {e}", "camera.pose")

    instances = []
    seen: set[str] = set()
    for i, entry in enumerate(doc.instances):
        prefix = f"instances[{i}]"
        if entry.id in seen:
            raise SchemaError(f"Duplicate instance id '{entry.id}'", f"{prefix}.id")
        seen.add(entry.id)

        mask = read_mask(_resolve(root, entry.mask, f"{prefix}.mask"))
        if mask.shape != depth.shape:
            raise ResolutionMismatchError(
                f"Mask of instance '{entry.id}' is {mask.width}x{mask.height}, "
                f"expected {depth.width}x{depth.height}",
                f"{prefix}.mask",
                instance=entry.id,
            )

        crop_rgb = crop_depth = None
        bbox = mask.bbox
        if bbox is not None:
            r0, r1, c0, c1 = bbox
            crop_rgb = image[r0:r1, c0:c1].copy()
            crop_depth = depth.region(bbox)

        instances.append(InstanceRecord(
            instance_id=entry.id,
            mask=mask,
            label=entry.label,
            category=entry.category,
            crop_rgb=crop_rgb,
            crop_depth=crop_depth,
            recon_mesh_path=_resolve(root, entry.recon_mesh, f"{prefix}.recon_mesh"),
            gt_mesh_path=_resolve(root, entry.gt_mesh, f"{prefix}.gt_mesh"),
            amodal_rgb_path=_resolve(root, entry.amodal_rgb, f"{prefix}.amodal_rgb"),
            amodal_depth_path=_resolve(root, entry.amodal_depth, f"{prefix}.amodal_depth"),
            completion_path=_resolve(root, entry.completion, f"{prefix}.completion"),
        ))

    _resolve(root, doc.ground_truth.scene_mesh, "ground_truth.scene_mesh")

    overlap = mask_overlap_count([inst.mask for inst in instances])
    if overlap:
        raise MaskOverlapError(f"Instance masks overlap on {overlap} pixels", overlap)

    manifest = SceneManifest(path, doc, image, depth, intr, pose, instances, anchor_depth)
    things = sum(1 for inst in instances if inst.is_thing)
    logger.info(
        f"Loaded manifest {path.name}: {len(instances)} instances "
        f"({things} things, {len(instances) - things} stuff), depth={doc.depth_kind.value}"
    )
    return manifest


def mask_overlap_count(masks: list[EntityMask]) -> int:
    """Number of pixels set in two or more masks"""

    if len(masks) < 2:
        return 0
    coverage = np.zeros(masks[0].shape, dtype=np.int32)
    for mask in masks:
        coverage += mask.bits
    return int(np.count_nonzero(coverage >= 2))


def partition_entities(manifest: SceneManifest) -> tuple[list[InstanceRecord], EntityMask]:
    """Split instances into things and the union mask of all stuff entities"""

    height, width = manifest.depth.shape
    stuff_union = EntityMask.empty(height, width)
    things = []
    for inst in manifest.instances:
        if inst.is_thing:
            things.append(inst)
        else:
            stuff_union = stuff_union.union(inst.mask)
    return things, stuff_union
