# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Per-scene background fitting and surface extraction.

The SDF network f is trained with an L1 loss on every ray sample; the color
network c with an L2 loss on surface samples only. Each network has its own
Adam state. The zero level set of f is extracted with marching cubes inside
the camera frustum and colored by c.
"""

import logging
import time

import numpy as np
from pydantic import BaseModel

from libs.background.mlp import Adam, MlpField, mlp_backward, mlp_forward
from libs.background.supervision import BackgroundRays, draw_batch
from libs.common.config import BackgroundSettings
from libs.common.errors import DivergenceError
from libs.geometry.camera import CameraIntrinsics
from libs.mesh.grid import sample_frustum_grid
from libs.mesh.marching_cubes import extract_isosurface
from libs.mesh.types import TriangleMesh

logger = logging.getLogger(__name__)


class FitStats(BaseModel):
    iterations: int
    final_loss: float
    final_sdf_loss: float
    final_color_loss: float
    seconds: float


class BackgroundFit:
    """Fitted SDF and color fields with their loss history"""

    def __init__(self, f: MlpField, c: MlpField, losses: np.ndarray, stats: FitStats):
        self.f = f
        self.c = c
        self.losses = losses
        self.stats = stats

    def __repr__(self):
        return f"BackgroundFit(iterations={self.stats.iterations}, loss={self.stats.final_loss:.4g})"


def fit_background(rays: BackgroundRays, params: BackgroundSettings, seed: int = 0) -> BackgroundFit:
    """Train fresh f and c networks for one scene"""

    rng = np.random.default_rng(seed)
    lo, hi = rays.bounds(params.band)
    center = 0.5 * (lo + hi)
    extent = float(np.max(hi - lo))
    scale = 2.0 / extent if extent > 0 else 1.0

    f = MlpField.initialize(rng, params.hidden_layers, params.hidden_units, 1, "identity", center=center, scale=scale)
    c = MlpField.initialize(rng, params.hidden_layers, params.hidden_units, 3, "logistic", center=center, scale=scale)
    adam_f = Adam(f.parameters(), params.lr, params.beta1, params.beta2, params.eps)
    adam_c = Adam(c.parameters(), params.lr, params.beta1, params.beta2, params.eps)
    train_color = params.color_weight > 0

    losses = np.zeros(params.iters)
    sdf_loss = color_loss = 0.0
    started = time.perf_counter()

    for it in range(params.iters):
        batch = draw_batch(rays, params, rng)

        out, cache = mlp_forward(f, batch.positions, return_cache=True)
        residual = out[:, 0] - batch.sdf_targets
        sdf_loss = float(np.mean(np.abs(residual)))
        grad = (np.sign(residual) / len(residual))[:, None]
        adam_f.step(mlp_backward(f, batch.positions, grad, cache))

        color_loss = 0.0
        if train_color:
            surface = batch.surface_positions
            col, col_cache = mlp_forward(c, surface, return_cache=True)
            diff = col - batch.color_targets
            color_loss = params.color_weight * float(np.mean(np.sum(diff * diff, axis=1)))
            col_grad = 2.0 * params.color_weight * diff / len(diff)
            adam_c.step(mlp_backward(c, surface, col_grad, col_cache))

        loss = sdf_loss + color_loss
        if not np.isfinite(loss):
            raise DivergenceError(f"Background loss became non-finite at iteration {it}", it)
        losses[it] = loss

        if (it + 1) % params.log_every == 0 or it == 0:
            logger.info(
                f"Background fit iteration {it + 1}/{params.iters}: "
                f"sdf={sdf_loss:.5g} color={color_loss:.5g}"
            )

    stats = FitStats(
        iterations=params.iters,
        final_loss=float(losses[-1]),
        final_sdf_loss=sdf_loss,
        final_color_loss=color_loss,
        seconds=time.perf_counter() - started,
    )
    logger.info(f"Background fit finished in {stats.seconds:.1f}s, final loss {stats.final_loss:.5g}")
    return BackgroundFit(f, c, losses, stats)


def depth_range(rays: BackgroundRays, margin: float) -> tuple[float, float]:
    return float(rays.depth.min()) * (1.0 - margin), float(rays.depth.max()) * (1.0 + margin)


def extract_background(fit: BackgroundFit, intr: CameraIntrinsics, near: float, far: float,
                       resolution: int, jobs: int = 1) -> TriangleMesh:
    """Zero level set of f inside the frustum, with vertex colors from c"""

    grid = sample_frustum_grid(fit.f, intr, near, far, resolution, jobs)
    result = extract_isosurface(grid, 0.0, jobs)
    mesh = result.mesh
    if mesh.is_empty:
        logger.warning("Background field has no zero crossing inside the frustum")
        return mesh

    # Faces interpolated towards out-of-frustum fill values are not part of the surface
    in_frustum = grid.mask.ravel()
    vertex_ok = in_frustum[result.edge_points].all(axis=1)
    keep = vertex_ok[mesh.faces].all(axis=1)
    mesh = mesh.submesh(keep)
    if mesh.is_empty:
        logger.warning("Background surface lies entirely on the frustum boundary")
        return mesh

    colors = np.clip(fit.c(mesh.vertices), 0.0, 1.0)
    mesh = TriangleMesh(mesh.vertices, mesh.faces, colors)
    logger.info(f"Extracted background surface: {mesh.n_vertices} vertices, {mesh.n_faces} faces")
    return mesh
