# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Per-instance reconstruction: crop, complete, reconstruct, align, place."""

import logging
import time
from typing import Any

from libs.common.config import Settings, derive_seed
from libs.common.errors import CorrespondenceFallback, SceneKitError
from libs.instance.alignment import align_scale_ransac, fallback_scale, place_instance
from libs.instance.hooks import CompletionHook, ReconstructionHook, complete_crop, reconstruct_object
from libs.instance.reprojection import RawCropOperator, ReprojectionOperator, SceneView
from libs.mesh.types import TriangleMesh
from libs.scene.types import InstanceRecord

logger = logging.getLogger(__name__)


class InstanceResult:
    """Outcome of one instance; mesh is None when the instance was skipped"""

    def __init__(self, instance_id: str, label: str, status: str,
                 mesh: TriangleMesh | None = None, scale: float | None = None,
                 inlier_fraction: float | None = None, pairs: int = 0,
                 error: dict[str, Any] | None = None, timings: dict[str, float] | None = None):
        self.instance_id = instance_id
        self.label = label
        self.status = status
        self.mesh = mesh
        self.scale = scale
        self.inlier_fraction = inlier_fraction
        self.pairs = pairs
        self.error = error
        self.timings = timings or {}

    def __repr__(self):
        return f"InstanceResult(id='{self.instance_id}', status='{self.status}', scale={self.scale})"

    @property
    def fallback(self) -> bool:
        return self.status == "fallback"

    @property
    def skipped(self) -> bool:
        return self.status == "skipped"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.instance_id,
            "label": self.label,
            "status": self.status,
            "scale": self.scale,
            "inlier_fraction": self.inlier_fraction,
            "pairs": self.pairs,
            "fallback": self.fallback,
            "vertices": None if self.mesh is None else self.mesh.n_vertices,
            "faces": None if self.mesh is None else self.mesh.n_faces,
            "error": self.error,
            "timings": self.timings,
        }


class InstanceProcessor:
    """Runs the object branch of the pipeline for one thing instance at a time"""

    def __init__(self, settings: Settings, completion_hook: CompletionHook | None = None,
                 recon_hook: ReconstructionHook | None = None,
                 use_reprojection: bool = True, use_completion: bool = True):
        self.settings = settings
        self.completion_hook = completion_hook or CompletionHook()
        self.recon_hook = recon_hook or ReconstructionHook()
        self.use_completion = use_completion
        if use_reprojection:
            self.operator = ReprojectionOperator(settings.camera)
        else:
            self.operator = RawCropOperator(settings.camera)

    def process(self, inst: InstanceRecord, scene: SceneView, seed: int) -> InstanceResult:
        timings: dict[str, float] = {}

        def timed(stage: str, fn, *args, **kwargs):
            started = time.perf_counter()
            try:
                return fn(*args, **kwargs)
            finally:
                timings[stage] = round(time.perf_counter() - started, 4)

        try:
            crop = timed("reproject", self.operator.reproject, inst, scene)

            completed = crop
            if self.use_completion:
                completed = timed(
                    "complete", complete_crop, crop, inst.label, self.completion_hook,
                    instance=inst, scene=scene, operator=self.operator,
                )

            recon = timed(
                "reconstruct", reconstruct_object, completed, self.recon_hook,
                instance=inst, label=inst.label, seed=seed, synth=self.settings.synth,
            )

            status = "ok"
            inlier_fraction = None
            pairs = 0
            try:
                alignment = timed(
                    "align", align_scale_ransac, recon, crop,
                    derive_seed(seed, f"ransac:{inst.instance_id}"), self.settings.ransac,
                )
                scale = alignment.scale
                inlier_fraction = alignment.inlier_fraction
                pairs = alignment.pairs
            except CorrespondenceFallback as e:
                logger.warning(f"Instance '{inst.instance_id}': {e.message}; using bounding-box scale")
                scale = fallback_scale(recon, crop)
                pairs = e.pair_count
                status = "fallback"

            placed = timed("place", place_instance, recon, scale, crop.camera)

        except SceneKitError as e:
            logger.warning(f"Skipping instance '{inst.instance_id}': [{e.code}] {e.message}")
            return InstanceResult(inst.instance_id, inst.label, "skipped", error=e.to_dict(), timings=timings)

        logger.info(
            f"Instance '{inst.instance_id}' ({inst.label}): scale={scale:.6g} "
            f"inliers={inlier_fraction if inlier_fraction is not None else 'n/a'} status={status}"
        )
        return InstanceResult(inst.instance_id, inst.label, status, placed, scale,
                              inlier_fraction, pairs, timings=timings)
