# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
SceneKit command line.

    scenekit synth        write a synthetic scene bundle
    scenekit reconstruct  reconstruct a manifest into a scene mesh and run report
    scenekit evaluate     compare a reconstruction against ground truth
    scenekit amodal       compose an amodal completion dataset

Exit codes: 0 success, 1 partial (instances or pairs skipped), 2 invalid input.
"""

import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np
import yaml
from pydantic import ValidationError

from libs.common.config import Settings, derive_seed
from libs.common.errors import IngestError, SceneKitError
from libs.common.logging import configure_logging
from libs.instance.hooks import CompletionHook, ReconstructionHook
from libs.mesh.io import read_scene
from libs.metrics.evaluation import evaluate_scene, resolve_protocol
from libs.pipeline.report import EXIT_INVALID, EXIT_OK, EXIT_PARTIAL, RunReport
from libs.pipeline.scene import ScenePipeline
from libs.synth.amodal import (
    PairRecord,
    audit_pair_files,
    compose_amodal_pair,
    object_view,
    random_object,
    write_index,
    write_pair,
)
from libs.synth.bundle import synthesize

logger = logging.getLogger(__name__)


def _fail(message: str, code: int = EXIT_INVALID):
    click.echo(f"Error: {message}", err=True)
    sys.exit(code)


def _settings(ctx: click.Context, **overrides) -> Settings:
    """Settings with precedence: command flags > group flags > config file > env > defaults"""

    base = ctx.obj or {}
    merged = {**base.get("overrides", {})}
    for section, values in overrides.items():
        if isinstance(values, dict):
            given = {k: v for k, v in values.items() if v is not None}
            merged[section] = {**merged.get(section, {}), **given}
        elif values is not None:
            merged[section] = values
    try:
        settings = Settings.from_file(base.get("config"), merged)
    except (ValidationError, ValueError, OSError, yaml.YAMLError) as e:
        _fail(f"invalid configuration: {e}")
    configure_logging(settings.monitoring)
    return settings


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON or YAML settings file")
@click.option("--seed", type=int, default=None, help="Base seed (default: SCENEKIT_SEED or 0)")
@click.option("--jobs", type=int, default=None, help="Worker threads (default: logical cores)")
@click.option("--log-level", default=None, help="Logging level")
@click.option("--log-format", type=click.Choice(["text", "json"]), default=None, help="Log output format")
@click.pass_context
def cli(ctx: click.Context, config_path, seed, jobs, log_level, log_format):
    """Modular single-view 3D scene reconstruction"""

    if config_path is not None and not Path(config_path).exists():
        _fail(f"config file not found: {config_path}")
    ctx.obj = {
        "config": config_path,
        "overrides": {
            "seed": seed,
            "jobs": jobs,
            "monitoring": {"level": log_level, "format": log_format},
        },
    }


@cli.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Bundle directory")
@click.option("--seed", type=int, default=None, help="Scene seed")
@click.option("--things", type=int, default=3, show_default=True, help="Number of thing primitives")
@click.option("--width", type=int, default=None, help="Image width")
@click.option("--height", type=int, default=None, help="Image height")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write a JSON run report here (kept outside the bundle)")
@click.pass_context
def synth(ctx, out_dir, seed, things, width, height, report_path):
    """Write a synthetic scene bundle"""

    if things < 0:
        _fail("--things must be non-negative")
    settings = _settings(ctx, seed=seed, synth={"width": width, "height": height})
    started = time.perf_counter()
    try:
        manifest_path = synthesize(out_dir, settings.seed, things, settings.synth, settings.camera,
                                   settings.effective_jobs)
    except (SceneKitError, ValidationError) as e:
        _fail(f"scene generation failed: {e}")

    if report_path:
        report = RunReport.start("synth", settings)
        report.results = {"manifest": str(manifest_path), "things": things}
        report.timings["total"] = round(time.perf_counter() - started, 4)
        report.write(report_path)
    click.echo(str(manifest_path))


@cli.command()
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--completion", type=click.Choice(["identity", "oracle_file", "external_command"]),
              default="identity", show_default=True, help="Completion hook mode")
@click.option("--completion-command", default=None, help="Command for external completion")
@click.option("--recon", type=click.Choice(["oracle_mesh", "external_command", "oracle_view"]),
              default="oracle_mesh", show_default=True, help="Reconstruction hook mode")
@click.option("--recon-command", default=None, help="Command for external reconstruction")
@click.option("--no-reprojection", is_flag=True, help="Feed raw image crops instead of reprojected crops")
@click.option("--no-completion", is_flag=True, help="Skip amodal completion")
@click.option("--no-background", is_flag=True, help="Skip background fitting")
@click.option("--crop-res", type=int, default=None)
@click.option("--ransac-iters", type=int, default=None)
@click.option("--ransac-tol", type=float, default=None)
@click.option("--bg-iters", type=int, default=None)
@click.option("--grid-res", type=int, default=None)
@click.option("--evaluate", "with_eval", is_flag=True, help="Evaluate against the manifest ground truth")
@click.option("--preset", type=click.Choice(["front", "hope", "custom"]), default=None)
@click.pass_context
def reconstruct(ctx, manifest_path, out_dir, completion, completion_command, recon, recon_command,
                no_reprojection, no_completion, no_background, crop_res, ransac_iters, ransac_tol,
                bg_iters, grid_res, with_eval, preset):
    """Reconstruct a manifest into a scene mesh and run report"""

    if completion == "external_command" and not completion_command:
        _fail("--completion external_command requires --completion-command")
    if recon == "external_command" and not recon_command:
        _fail("--recon external_command requires --recon-command")
    settings = _settings(
        ctx,
        camera={"crop_res": crop_res},
        ransac={"iters": ransac_iters, "tol": ransac_tol},
        background={"iters": bg_iters, "grid_res": grid_res},
        evaluation={"preset": preset},
    )
    try:
        pipeline = ScenePipeline(
            settings,
            CompletionHook(mode=completion, command=completion_command),
            ReconstructionHook(mode=recon, command=recon_command),
            use_reprojection=not no_reprojection,
            use_completion=not no_completion,
            with_background=not no_background,
        )
        result = pipeline.run(manifest_path, out_dir, evaluate=with_eval)
    except IngestError as e:
        field = f" ({e.field_path})" if e.field_path else ""
        _fail(f"invalid manifest{field}: {e.message}")
    except (SceneKitError, ValidationError) as e:
        _fail(f"reconstruction failed: {e}")

    summary = {
        "scene": str(Path(out_dir) / "scene.obj"),
        "instances": len(result.instances),
        "skipped": sum(1 for r in result.instances if r.skipped),
        "exit_code": result.exit_code,
    }
    if result.evaluation is not None:
        summary.update(chamfer=result.evaluation.chamfer, f_score=result.evaluation.f_score)
    click.echo(json.dumps(summary))
    sys.exit(result.exit_code)


@cli.command()
@click.option("--recon", "recon_path", type=click.Path(dir_okay=False), required=True)
@click.option("--gt", "gt_path", type=click.Path(dir_okay=False), required=True)
@click.option("--preset", type=click.Choice(["front", "hope", "custom"]), default=None)
@click.option("--n-points", type=int, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--foreground-only/--whole-scene", default=None,
              help="Restrict the scene score to thing components")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="JSON report path")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="CSV table path")
@click.pass_context
def evaluate(ctx, recon_path, gt_path, preset, n_points, tau, foreground_only, out_path, csv_path):
    """Compare a reconstruction against ground truth"""

    settings = _settings(ctx, evaluation={"preset": preset, "n_points": n_points, "tau": tau})
    ev = settings.evaluation
    started = time.perf_counter()
    try:
        protocol = resolve_protocol(ev.preset, ev.n_points, ev.tau, foreground_only)
        evaluation = evaluate_scene(read_scene(recon_path), read_scene(gt_path), protocol,
                                    ev.seed, ev.component_points, ev.batch_size)
    except (SceneKitError, ValidationError) as e:
        _fail(f"evaluation failed: {e}")

    report = RunReport.start("evaluate", settings, evaluation=ev.seed)
    report.results = evaluation.model_dump(mode="json")
    report.timings["total"] = round(time.perf_counter() - started, 4)
    if out_path:
        report.write(out_path)
    if csv_path:
        evaluation.write_csv(csv_path)
    click.echo(json.dumps({
        "preset": protocol.name,
        "n_points": protocol.n_points,
        "tau": protocol.tau,
        "chamfer": evaluation.chamfer,
        "f_score": evaluation.f_score,
    }))


@cli.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--targets", type=int, default=10, show_default=True)
@click.option("--occluders", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--resolution", type=int, default=128, show_default=True)
@click.option("--occlusion-min", type=float, default=None)
@click.option("--occlusion-max", type=float, default=None)
@click.option("--audit", is_flag=True, help="Re-check the neutral-pixel invariant on the written files")
@click.pass_context
def amodal(ctx, out_dir, targets, occluders, seed, resolution, occlusion_min, occlusion_max, audit):
    """Compose an amodal completion dataset"""

    if targets < 1 or occluders < 1 or resolution < 8:
        _fail("--targets and --occluders must be positive and --resolution at least 8")
    settings = _settings(ctx, seed=seed,
                         synth={"occlusion_min": occlusion_min, "occlusion_max": occlusion_max})
    synth_settings = settings.synth
    occlusion = (synth_settings.occlusion_min, synth_settings.occlusion_max)
    started = time.perf_counter()

    rng = np.random.default_rng(derive_seed(settings.seed, "amodal"))
    target_objs = [random_object(rng, f"target_{i:03d}") for i in range(targets)]
    occluder_objs = [random_object(rng, f"occluder_{j:03d}") for j in range(occluders)]
    target_views = [object_view(p, resolution) for p in target_objs]
    occluder_masks = [object_view(p, resolution)[1] for p in occluder_objs]

    records: list[PairRecord] = []
    failures: list[dict] = []
    for target, (rgb, mask) in zip(target_objs, target_views):
        for occluder, silhouette in zip(occluder_objs, occluder_masks):
            name = f"{target.id}__{occluder.id}"
            pair_seed = derive_seed(settings.seed, name)
            try:
                pair = compose_amodal_pair(rgb, mask, silhouette, pair_seed, occlusion,
                                           synth_settings.max_composition_tries, prompt=target.label)
            except SceneKitError as e:
                failures.append({"pair": name, **e.to_dict()})
                click.echo(f"Failed: {name}: {e.message}", err=True)
                continue
            paths = write_pair(out_dir, name, pair)
            records.append(PairRecord(pair=name, prompt=pair.prompt, seed=pair_seed,
                                      occluded_fraction=pair.occluded_fraction,
                                      target_id=target.id, occluder_id=occluder.id, **paths))

    Path(out_dir).mkdir(parents=True, exist_ok=True)
    write_index(out_dir, records)

    violations = {}
    if audit:
        for record in records:
            bad = audit_pair_files(out_dir, record)
            if bad:
                violations[record.pair] = bad
        logger.info(f"Audit over {len(records)} pairs: {len(violations)} with invariant violations")

    report = RunReport.start("amodal", settings, amodal=derive_seed(settings.seed, "amodal"))
    report.results = {"pairs": len(records), "failures": failures, "audit": audit,
                      "violations": violations, "occlusion_range": list(occlusion)}
    report.timings["total"] = round(time.perf_counter() - started, 4)
    report.exit_code = EXIT_PARTIAL if failures or violations else EXIT_OK
    report.errors = failures
    report.write(Path(out_dir) / "report.json")
    click.echo(json.dumps({"pairs": len(records), "failures": len(failures),
                           "violations": len(violations)}))
    sys.exit(report.exit_code)


if __name__ == "__main__":
    cli()
