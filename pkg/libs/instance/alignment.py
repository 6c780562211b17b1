# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Scale alignment of reconstructed objects.

A reconstruction comes back in the virtual camera frame up to an unknown
scale. Rendering it through the virtual camera pairs every crop pixel with a
reconstructed depth along the same ray, so a single pair already determines a
scale candidate. RANSAC keeps the candidate with the most inliers and refines
it by least squares over those inliers.
"""

import logging

import numpy as np
from pydantic import BaseModel

from libs.common.config import RansacSettings
from libs.common.errors import CorrespondenceFallback, DegenerateInstanceError
from libs.geometry.camera import VirtualCamera, object_to_view, pixel_rays, unproject
from libs.instance.reprojection import NormalizedCrop
from libs.mesh.raster import render_depth
from libs.mesh.types import TriangleMesh

logger = logging.getLogger(__name__)

MAX_SCORE_CELLS = 1 << 22


class AlignmentResult(BaseModel):
    scale: float
    inlier_fraction: float
    pairs: int
    inliers: int


def depth_correspondences(recon: TriangleMesh, crop: NormalizedCrop) -> tuple[np.ndarray, np.ndarray]:
    """
    Ray distances (recon, crop) at every crop pixel where both the crop depth
    and the rendered reconstruction are valid.
    """

    rendered = render_depth(recon, crop.camera.intr)
    both = crop.depth.validity & np.isfinite(rendered) & (np.nan_to_num(rendered) > 0)
    ray_len = np.linalg.norm(pixel_rays(crop.camera.intr), axis=-1)
    r = rendered[both] * ray_len[both]
    c = crop.depth.values[both] * ray_len[both]
    return r, c


def align_scale_ransac(recon: TriangleMesh, crop: NormalizedCrop, seed: int = 0,
                       params: RansacSettings | None = None) -> AlignmentResult:
    """Scale s such that s * recon matches the visible crop points along the camera rays"""

    params = params or RansacSettings()
    r, c = depth_correspondences(recon, crop)
    n = len(r)
    if n < params.min_pairs:
        raise CorrespondenceFallback(
            f"Only {n} depth correspondences, {params.min_pairs} required", n
        )

    rng = np.random.default_rng(seed)
    picks = rng.integers(0, n, size=params.iters)
    candidates = c[picks] / r[picks]

    # Inlier counts per candidate, in bounded blocks of the candidate x pair table
    counts = np.zeros(params.iters, dtype=np.int64)
    block = max(1, MAX_SCORE_CELLS // n)
    for start in range(0, params.iters, block):
        s = candidates[start:start + block, None]
        counts[start:start + block] = np.count_nonzero(np.abs(s * r[None, :] - c[None, :]) <= params.tol, axis=1)

    best = int(np.argmax(counts))
    inliers = np.abs(candidates[best] * r - c) <= params.tol
    ri, ci = r[inliers], c[inliers]
    scale = float(np.dot(ri, ci) / np.dot(ri, ri))

    result = AlignmentResult(
        scale=scale,
        inlier_fraction=float(inliers.sum()) / n,
        pairs=n,
        inliers=int(inliers.sum()),
    )
    logger.debug(f"RANSAC scale {scale:.6g} with {result.inliers}/{n} inliers")
    return result


def fallback_scale(recon: TriangleMesh, crop: NormalizedCrop) -> float:
    """Ratio of bounding-box diagonals: visible crop points over the reconstruction"""

    visible = unproject(crop.depth, crop.camera.intr)
    if len(visible) < 2:
        raise DegenerateInstanceError("Crop has no visible depth to derive a fallback scale")
    lo, hi = visible.bounds()
    r_lo, r_hi = recon.bounds()
    recon_diag = float(np.linalg.norm(r_hi - r_lo))
    if not recon_diag > 0:
        raise DegenerateInstanceError("Reconstruction has zero extent")
    return float(np.linalg.norm(hi - lo)) / recon_diag


def place_instance(recon: TriangleMesh, scale: float, camera: VirtualCamera) -> TriangleMesh:
    """Reconstructed object mapped into view space at the recovered scale"""
    return object_to_view(recon, camera.normalization, camera.pose, scale)
