# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
End-to-end scene reconstruction.

Things go through the per-instance branch (crop, complete, reconstruct, align,
place) on a bounded worker pool; stuff pixels supervise one background field
whose zero level set becomes the background mesh. Every placed component is
merged into a single scene mesh with provenance groups.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

from libs.background.fitting import depth_range, extract_background, fit_background
from libs.background.mlp import save_field
from libs.background.supervision import BackgroundRays
from libs.common.config import Settings, derive_seed
from libs.common.errors import DivergenceError, NoBackgroundError
from libs.instance.hooks import CompletionHook, ReconstructionHook
from libs.instance.processor import InstanceProcessor, InstanceResult
from libs.instance.reprojection import SceneView
from libs.mesh.io import read_scene, save_mesh, write_scene
from libs.mesh.types import TriangleMesh, merge_scene
from libs.metrics.evaluation import EvaluationReport, evaluate_scene, resolve_protocol
from libs.pipeline.report import EXIT_OK, EXIT_PARTIAL, RunReport
from libs.scene.depth_align import fit_scale_shift
from libs.scene.manifest import DepthKind, SceneManifest, load_manifest, partition_entities

logger = logging.getLogger(__name__)

BACKGROUND_NAME = "background"


class SceneResult:
    def __init__(self, mesh: TriangleMesh, instances: list[InstanceResult], report: RunReport,
                 background: TriangleMesh | None = None, evaluation: EvaluationReport | None = None):
        self.mesh = mesh
        self.instances = instances
        self.report = report
        self.background = background
        self.evaluation = evaluation

    def __repr__(self):
        return f"SceneResult(components={len(self.mesh.groups)}, exit_code={self.exit_code})"

    @property
    def exit_code(self) -> int:
        return self.report.exit_code


class ScenePipeline:
    """Reconstruct every entity of a manifest into one view-space scene mesh"""

    def __init__(self, settings: Settings, completion_hook: CompletionHook | None = None,
                 recon_hook: ReconstructionHook | None = None, use_reprojection: bool = True,
                 use_completion: bool = True, with_background: bool = True):
        self.settings = settings
        self.processor = InstanceProcessor(settings, completion_hook, recon_hook,
                                           use_reprojection, use_completion)
        self.with_background = with_background

    def scene_view(self, manifest: SceneManifest, report: RunReport) -> SceneView:
        depth = manifest.depth
        if manifest.depth_kind is DepthKind.AFFINE:
            fit = fit_scale_shift(manifest.depth, manifest.anchor_depth)
            depth = fit.apply(manifest.depth)
            report.results["depth_alignment"] = fit.model_dump()
            logger.info(f"Affine depth aligned: s={fit.s:.6g} t={fit.t:.6g} rms={fit.residual_rms:.4g}")
        return SceneView(image=manifest.image, depth=depth, intr=manifest.intr)

    def _instances(self, things, scene: SceneView, seed: int) -> list[InstanceResult]:
        ordered = sorted(things, key=lambda inst: inst.instance_id)
        jobs = min(self.settings.effective_jobs, max(1, len(ordered)))
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(lambda inst: self.processor.process(inst, scene, seed), ordered))
        return [self.processor.process(inst, scene, seed) for inst in ordered]

    def _background(self, stuff_union, scene: SceneView, seed: int, out_dir: Path | None,
                    report: RunReport) -> TriangleMesh | None:
        params = self.settings.background
        info: dict[str, Any] = {"status": "skipped"}
        report.results["background"] = info
        if stuff_union.is_empty:
            info["reason"] = "no stuff entities"
            return None

        try:
            rays = BackgroundRays(stuff_union, scene.depth, scene.intr, scene.image)
            fit = fit_background(rays, params, derive_seed(seed, "background"))
        except (NoBackgroundError, DivergenceError) as e:
            logger.error(f"Background failed: [{e.code}] {e.message}")
            info.update(status="failed", error=e.to_dict())
            report.errors.append(e.to_dict())
            return None

        near, far = depth_range(rays, params.depth_margin)
        mesh = extract_background(fit, scene.intr, near, far, params.grid_res, self.settings.effective_jobs)
        info.update(
            status="ok",
            rays=len(rays),
            near=near,
            far=far,
            fit=fit.stats.model_dump(),
            vertices=mesh.n_vertices,
            faces=mesh.n_faces,
        )
        if out_dir is not None:
            save_field(out_dir / "fields" / "sdf.bin", fit.f)
            save_field(out_dir / "fields" / "color.bin", fit.c)
        if mesh.is_empty:
            info["status"] = "empty"
            return None
        return mesh

    def run(self, manifest_path: str | Path, out_dir: str | Path | None = None,
            evaluate: bool = False) -> SceneResult:
        started = time.perf_counter()
        seed = self.settings.seed
        report = RunReport.start("reconstruct", self.settings, background=derive_seed(seed, "background"))
        out = Path(out_dir) if out_dir is not None else None

        manifest = load_manifest(manifest_path)
        report.results["manifest"] = str(manifest.path)
        scene = self.scene_view(manifest, report)
        things, stuff_union = partition_entities(manifest)

        t0 = time.perf_counter()
        results = self._instances(things, scene, seed)
        report.timings["instances"] = round(time.perf_counter() - t0, 4)

        background = None
        if self.with_background:
            t0 = time.perf_counter()
            background = self._background(stuff_union, scene, seed, out, report)
            report.timings["background"] = round(time.perf_counter() - t0, 4)

        placed = [r for r in results if r.mesh is not None]
        meshes = [r.mesh for r in placed]
        names = [r.instance_id for r in placed]
        kinds = ["thing"] * len(placed)
        if background is not None:
            meshes.append(background)
            names.append(BACKGROUND_NAME)
            kinds.append("background")
        scene_mesh = merge_scene(meshes, names, kinds, list(names))

        report.results["instances"] = [r.to_dict() for r in results]
        for r in results:
            report.seeds[f"ransac:{r.instance_id}"] = derive_seed(seed, f"ransac:{r.instance_id}")
        degraded = any(r.skipped for r in results) or bool(report.errors)
        report.exit_code = EXIT_PARTIAL if degraded else EXIT_OK

        if out is not None:
            write_scene(out, scene_mesh, name="scene")
            for r in placed:
                save_mesh(out / "instances" / f"{r.instance_id}.obj", r.mesh)

        evaluation = None
        if evaluate and manifest.gt_scene_mesh_path is not None and not scene_mesh.is_empty:
            eval_settings = self.settings.evaluation
            protocol = resolve_protocol(eval_settings.preset, eval_settings.n_points, eval_settings.tau)
            evaluation = evaluate_scene(scene_mesh, read_scene(manifest.gt_scene_mesh_path), protocol,
                                        eval_settings.seed, eval_settings.component_points,
                                        eval_settings.batch_size)
            report.results["evaluation"] = evaluation.model_dump(mode="json")

        report.timings["total"] = round(time.perf_counter() - started, 4)
        if out is not None:
            report.write(out / "report.json")

        skipped = sum(1 for r in results if r.skipped)
        logger.info(
            f"Scene reconstructed: {len(placed)}/{len(results)} instances placed, {skipped} skipped, "
            f"background={'yes' if background is not None else 'no'}"
        )
        return SceneResult(scene_mesh, results, report, background, evaluation)
