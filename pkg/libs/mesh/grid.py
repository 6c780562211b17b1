# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Dense field sampling over the bounding box of a camera frustum."""

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from libs.common.errors import DomainError
from libs.geometry.camera import CameraIntrinsics
from libs.mesh.types import ScalarGrid

logger = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray], np.ndarray]


def frustum_bounds(intr: CameraIntrinsics, near: float, far: float) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box around the image frustum between the near and far planes"""

    corners = []
    for z in (near, far):
        for u in (0.0, float(intr.width)):
            for v in (0.0, float(intr.height)):
                corners.append([(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z])
    corners = np.array(corners)
    return corners.min(axis=0), corners.max(axis=0)


def in_frustum(points: np.ndarray, intr: CameraIntrinsics, near: float, far: float) -> np.ndarray:
    z = points[:, 2]
    inside = (z >= near) & (z <= far)
    safe_z = np.where(inside, z, 1.0)
    u = intr.fx * points[:, 0] / safe_z + intr.cx
    v = intr.fy * points[:, 1] / safe_z + intr.cy
    return inside & (u >= 0) & (u <= intr.width) & (v >= 0) & (v <= intr.height)


def sample_frustum_grid(field: FieldFn, intr: CameraIntrinsics, near: float, far: float,
                        resolution: int | tuple[int, int, int], jobs: int = 1) -> ScalarGrid:
    """
    Evaluate field on a regular lattice over the frustum box.
    Lattice points outside the frustum get the value +far and are masked out.
    """

    if not 0 < near < far:
        raise DomainError(f"Invalid depth range near={near} far={far}")
    dims = (resolution,) * 3 if isinstance(resolution, int) else tuple(resolution)
    if len(dims) != 3 or min(dims) < 2:
        raise DomainError(f"Grid resolution must be at least 2 per axis, got {dims}")

    lo, hi = frustum_bounds(intr, near, far)
    xs, ys, zs = (np.linspace(lo[a], hi[a], dims[a]) for a in range(3))

    def sample_slab(k: int) -> tuple[np.ndarray, np.ndarray]:
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        points = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, zs[k])], axis=1)
        inside = in_frustum(points, intr, near, far)
        out = np.full(len(points), far)
        if inside.any():
            out[inside] = np.asarray(field(points[inside]), dtype=np.float64).reshape(-1)
        return out.reshape(dims[0], dims[1]), inside.reshape(dims[0], dims[1])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            slabs = list(pool.map(sample_slab, range(dims[2])))
    else:
        slabs = [sample_slab(k) for k in range(dims[2])]

    values = np.stack([s[0] for s in slabs], axis=2)
    mask = np.stack([s[1] for s in slabs], axis=2)
    logger.info(f"Sampled {dims[0]}x{dims[1]}x{dims[2]} frustum grid, {int(mask.sum())} points in frustum")
    return ScalarGrid(values, lo, hi, mask)
