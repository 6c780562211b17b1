# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Signed-distance supervision sampled along background camera rays."""

import logging
import threading

import numpy as np

from libs.common.config import BackgroundSettings
from libs.common.errors import DimensionError, NoBackgroundError
from libs.geometry.camera import CameraIntrinsics
from libs.scene.types import DepthMap, EntityMask

logger = logging.getLogger(__name__)

_approximation_logged = False
_approximation_lock = threading.Lock()


def _log_approximation_once() -> bool:
    """Log the along-ray target notice on the first call in this process; True when it logged"""

    global _approximation_logged
    with _approximation_lock:
        if _approximation_logged:
            return False
        _approximation_logged = True
    logger.info("Background SDF targets use the signed distance along each camera ray "
                "(d - t), an approximation of the Euclidean distance to the surface")
    return True


class RaySampleBatch:
    """
    Positions with their signed distance targets.
    The last sample of every ray sits on the surface and carries a color target.
    """

    def __init__(self, positions: np.ndarray, sdf_targets: np.ndarray, ray_ids: np.ndarray,
                 surface_index: np.ndarray, color_targets: np.ndarray):
        self.positions = positions
        self.sdf_targets = sdf_targets
        self.ray_ids = ray_ids
        self.surface_index = surface_index
        self.color_targets = color_targets

    def __len__(self) -> int:
        return len(self.positions)

    def __repr__(self):
        return f"RaySampleBatch(samples={len(self)}, rays={len(self.surface_index)})"

    @property
    def surface_positions(self) -> np.ndarray:
        return self.positions[self.surface_index]


class BackgroundRays:
    """Valid stuff pixels of one scene, ready to be sampled repeatedly"""

    def __init__(self, stuff_union: EntityMask, depth: DepthMap, intr: CameraIntrinsics,
                 image: np.ndarray | None = None):
        if stuff_union.shape != depth.shape or depth.shape != intr.shape:
            raise DimensionError("Stuff mask, depth and intrinsics must share a resolution")

        rows, cols = np.nonzero(stuff_union.bits & depth.validity)
        if rows.size == 0:
            raise NoBackgroundError("No stuff pixel has valid depth")

        self.depth = depth.values[rows, cols]
        self.directions = np.stack([
            (cols + 0.5 - intr.cx) / intr.fx,
            (rows + 0.5 - intr.cy) / intr.fy,
            np.ones(rows.size),
        ], axis=1)
        if image is None:
            self.colors = np.full((rows.size, 3), 0.5)
        else:
            self.colors = np.asarray(image, dtype=np.float64)[rows, cols, :3]
        self.pixels = np.stack([rows, cols], axis=1)

    def __len__(self) -> int:
        return len(self.depth)

    def surface_points(self) -> np.ndarray:
        return self.directions * self.depth[:, None]

    def bounds(self, band: float) -> tuple[np.ndarray, np.ndarray]:
        """Box around every point the sampler can emit"""
        near = self.directions * (self.depth * (1.0 - band))[:, None]
        far = self.directions * (self.depth * (1.0 + band))[:, None]
        both = np.concatenate([near, far])
        return both.min(axis=0), both.max(axis=0)


def draw_batch(rays: BackgroundRays, params: BackgroundSettings,
               rng: np.random.Generator) -> RaySampleBatch:
    """
    Draw params.rays_per_batch stuff pixels; sample depths uniformly within
    d * (1 +/- band) and one at d itself. Targets are d - t along the ray.
    """

    _log_approximation_once()

    n_rays = params.rays_per_batch
    k = params.samples_per_ray
    picks = rng.integers(0, len(rays), size=n_rays)
    d = rays.depth[picks]

    offsets = rng.uniform(-params.band, params.band, size=(n_rays, k))
    t = np.concatenate([d[:, None] * (1.0 + offsets), d[:, None]], axis=1)
    targets = d[:, None] - t
    targets[:, -1] = 0.0

    positions = rays.directions[picks][:, None, :] * t[:, :, None]
    ray_ids = np.repeat(np.arange(n_rays), k + 1)
    surface_index = np.arange(n_rays) * (k + 1) + k

    return RaySampleBatch(
        positions.reshape(-1, 3),
        targets.reshape(-1),
        ray_ids,
        surface_index,
        rays.colors[picks],
    )


def sample_ray_supervision(stuff_union: EntityMask, depth: DepthMap, intr: CameraIntrinsics,
                           params: BackgroundSettings, rng: np.random.Generator,
                           image: np.ndarray | None = None) -> RaySampleBatch:
    """One supervision batch straight from the stuff mask; raises NoBackgroundError when it is empty"""

    return draw_batch(BackgroundRays(stuff_union, depth, intr, image), params, rng)
