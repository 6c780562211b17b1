# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Analytic ray casting of primitive scenes.

Rays leave the camera centre through every pixel centre with a direction of
unit camera-space z, so the ray parameter of a hit is its camera depth.
Intersections are closed form (sphere quadratic, box slab test, finite
plane). Image rows are shaded in parallel blocks and stitched in order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from libs.geometry.camera import pixel_rays
from libs.scene.types import NEUTRAL, DepthMap, EntityMask
from libs.synth.primitives import Primitive, PrimitiveScene

logger = logging.getLogger(__name__)

ROW_BLOCK = 16
MIN_T = 1e-9
PARALLEL_EPS = 1e-15
AMBIENT = 0.3
DIFFUSE = 0.7
LIGHT_DIRECTION = np.array([-0.3, 1.0, -0.6]) / np.linalg.norm([-0.3, 1.0, -0.6])


class RenderResult:
    """Depth, per-pixel primitive index (-1 where nothing was hit) and shaded colors"""

    def __init__(self, depth: DepthMap, instance_ids: np.ndarray, rgb: np.ndarray, ids: list[str]):
        self.depth = depth
        self.instance_ids = instance_ids
        self.rgb = rgb
        self.ids = ids

    def __repr__(self):
        return f"RenderResult(shape={self.depth.shape}, primitives={len(self.ids)})"

    def mask(self, primitive_id: str) -> EntityMask:
        return EntityMask(self.instance_ids == self.ids.index(primitive_id))

    @property
    def coverage(self) -> EntityMask:
        return EntityMask(self.instance_ids >= 0)


def intersect_sphere(origin: np.ndarray, dirs: np.ndarray, prim: Primitive) -> tuple[np.ndarray, np.ndarray]:
    """Nearest positive ray parameter (inf on a miss) and the outward normal"""

    center = np.asarray(prim.center)
    radius = prim.size[0]
    oc = origin - center
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = dirs @ oc
    c = float(oc @ oc) - radius * radius
    disc = b * b - a * c

    t = np.full(len(dirs), np.inf)
    hit = disc >= 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    near = (-b - root) / a
    far = (-b + root) / a
    t_hit = np.where(near > MIN_T, near, far)
    hit &= t_hit > MIN_T
    t[hit] = t_hit[hit]

    points = origin + dirs * np.where(hit, t, 0.0)[:, None]
    normals = (points - center) / radius
    return t, normals


def intersect_box(origin: np.ndarray, dirs: np.ndarray, prim: Primitive) -> tuple[np.ndarray, np.ndarray]:
    rot = prim.rotation
    half = np.asarray(prim.size)
    o = rot.T @ (origin - np.asarray(prim.center))
    d = dirs @ rot

    t_near = np.full(len(dirs), -np.inf)
    t_far = np.full(len(dirs), np.inf)
    near_axis = np.zeros(len(dirs), dtype=np.int64)
    hit = np.ones(len(dirs), dtype=bool)

    for axis in range(3):
        da = d[:, axis]
        flat = np.abs(da) < PARALLEL_EPS
        hit &= ~(flat & ((o[axis] < -half[axis]) | (o[axis] > half[axis])))
        safe = np.where(flat, 1.0, da)
        t1 = (-half[axis] - o[axis]) / safe
        t2 = (half[axis] - o[axis]) / safe
        lo = np.where(flat, -np.inf, np.minimum(t1, t2))
        hi = np.where(flat, np.inf, np.maximum(t1, t2))
        near_axis = np.where(lo > t_near, axis, near_axis)
        t_near = np.maximum(t_near, lo)
        t_far = np.minimum(t_far, hi)

    hit &= (t_near <= t_far) & (t_far > MIN_T)
    t_hit = np.where(t_near > MIN_T, t_near, t_far)
    t = np.where(hit, t_hit, np.inf)

    local_normal = np.zeros((len(dirs), 3))
    rows = np.arange(len(dirs))
    local_normal[rows, near_axis] = -np.sign(d[rows, near_axis])
    return t, local_normal @ rot.T


def intersect_plane(origin: np.ndarray, dirs: np.ndarray, prim: Primitive) -> tuple[np.ndarray, np.ndarray]:
    rot = prim.rotation
    o = rot.T @ (origin - np.asarray(prim.center))
    d = dirs @ rot

    dy = d[:, 1]
    flat = np.abs(dy) < PARALLEL_EPS
    t_hit = -o[1] / np.where(flat, 1.0, dy)
    px = o[0] + t_hit * d[:, 0]
    pz = o[2] + t_hit * d[:, 2]
    hit = ~flat & (t_hit > MIN_T) & (np.abs(px) <= prim.size[0]) & (np.abs(pz) <= prim.size[2])
    t = np.where(hit, t_hit, np.inf)

    # Two-sided: the normal faces the incoming ray
    side = np.where(o[1] >= 0, 1.0, -1.0)
    normals = np.tile(rot[:, 1] * side, (len(dirs), 1))
    return t, normals


_INTERSECTORS = {
    "sphere": intersect_sphere,
    "box": intersect_box,
    "plane": intersect_plane,
}


def _render_rows(scene: PrimitiveScene, dirs_world: np.ndarray, origin: np.ndarray):
    n = len(dirs_world)
    best_t = np.full(n, np.inf)
    best_id = np.full(n, -1, dtype=np.int32)
    best_normal = np.zeros((n, 3))

    for index, prim in enumerate(scene.primitives):
        t, normals = _INTERSECTORS[prim.kind](origin, dirs_world, prim)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_id = np.where(closer, index, best_id)
        best_normal[closer] = normals[closer]

    albedo = np.array([p.albedo for p in scene.primitives]).reshape(-1, 3)
    shade = AMBIENT + DIFFUSE * np.clip(best_normal @ LIGHT_DIRECTION, 0.0, None)
    rgb = np.full((n, 3), NEUTRAL)
    hit = best_id >= 0
    rgb[hit] = np.clip(albedo[best_id[hit]] * shade[hit, None], 0.0, 1.0)
    depth = np.where(hit, best_t, np.nan)
    return depth, best_id, rgb


def raycast_render(scene: PrimitiveScene, jobs: int = 1) -> RenderResult:
    """Nearest analytic hit per pixel: depth (camera z), primitive index map and Lambert-shaded colors"""

    for prim in scene.primitives:
        prim.check_size()

    intr = scene.intr
    height, width = intr.height, intr.width
    rays = pixel_rays(intr).reshape(-1, 3)
    # Camera-space direction with unit z, rotated to world; ray parameter equals camera depth
    dirs_world = rays @ scene.pose.rotation
    origin = scene.pose.center

    blocks = [(r0, min(r0 + ROW_BLOCK, height)) for r0 in range(0, height, ROW_BLOCK)]

    def render_block(block: tuple[int, int]):
        r0, r1 = block
        return _render_rows(scene, dirs_world[r0 * width:r1 * width], origin)

    if jobs > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(render_block, blocks))
    else:
        parts = [render_block(b) for b in blocks]

    depth = np.concatenate([p[0] for p in parts]).reshape(height, width)
    ids = np.concatenate([p[1] for p in parts]).reshape(height, width)
    rgb = np.concatenate([p[2] for p in parts]).reshape(height, width, 3)

    result = RenderResult(DepthMap(depth), ids, rgb, [p.id for p in scene.primitives])
    logger.debug(f"Rendered {width}x{height}: {int(np.count_nonzero(ids >= 0))} pixels covered")
    return result
