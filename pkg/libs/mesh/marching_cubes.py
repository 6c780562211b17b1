# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Table-driven marching cubes over a ScalarGrid.

Cubes are classified and triangulated in fixed-size z-slabs that may run on a
thread pool; the slab partition never depends on the worker count, so the
output is identical for any number of workers. Every vertex lives on a global
lattice edge keyed by ``flat(lower point) * 3 + axis``; cubes sharing an edge
therefore share the vertex.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from libs.mesh.mc_tables import CORNER_OFFSETS, CORNER_PAIRS, EDGE_TRIANGLES
from libs.mesh.types import ScalarGrid, TriangleMesh

logger = logging.getLogger(__name__)

SLAB_DEPTH = 16

# Lower corner offset and axis of every cube edge
_EDGE_LOWER = np.minimum(CORNER_OFFSETS[CORNER_PAIRS[:, 0]], CORNER_OFFSETS[CORNER_PAIRS[:, 1]])
_EDGE_AXIS = np.argmax(np.abs(CORNER_OFFSETS[CORNER_PAIRS[:, 1]] - CORNER_OFFSETS[CORNER_PAIRS[:, 0]]), axis=1)


class IsosurfaceResult:
    """Extracted mesh plus the lattice edge each vertex was interpolated on"""

    def __init__(self, mesh: TriangleMesh, edge_points: np.ndarray):
        self.mesh = mesh
        # (V, 2) flat lattice indices of the two endpoints of each vertex's edge
        self.edge_points = edge_points


def _slab_keys(below: np.ndarray, k0: int, k1: int) -> np.ndarray:
    """Edge keys (T, 3) of every triangle emitted by cubes with k0 <= k < k1"""

    nx, ny, nz = below.shape
    cube_index = np.zeros((nx - 1, ny - 1, k1 - k0), dtype=np.int64)
    for corner, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        bits = below[dx:nx - 1 + dx, dy:ny - 1 + dy, k0 + dz:k1 + dz]
        cube_index |= bits.astype(np.int64) << corner

    active = (cube_index != 0) & (cube_index != 255)
    ci, cj, ck = np.nonzero(active)
    if ci.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    cases = cube_index[ci, cj, ck]
    ck = ck + k0

    table = EDGE_TRIANGLES[cases, :15]
    rows, slots = np.nonzero(table >= 0)
    edges = table[rows, slots]

    lower = np.stack([ci[rows], cj[rows], ck[rows]], axis=1) + _EDGE_LOWER[edges]
    flat = (lower[:, 0] * ny + lower[:, 1]) * nz + lower[:, 2]
    keys = flat * 3 + _EDGE_AXIS[edges]
    return keys.reshape(-1, 3)


def extract_isosurface(grid: ScalarGrid, iso: float = 0.0, jobs: int = 1) -> IsosurfaceResult:
    """Marching cubes returning the mesh and per-vertex lattice edges"""

    values = grid.values
    nx, ny, nz = values.shape
    below = values < iso

    bounds = [(k0, min(k0 + SLAB_DEPTH, nz - 1)) for k0 in range(0, nz - 1, SLAB_DEPTH)]
    if jobs > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            slabs = list(pool.map(lambda b: _slab_keys(below, b[0], b[1]), bounds))
    else:
        slabs = [_slab_keys(below, k0, k1) for k0, k1 in bounds]

    keys = np.concatenate(slabs) if slabs else np.zeros((0, 3), dtype=np.int64)
    if len(keys) == 0:
        logger.info(f"Marching cubes on {nx}x{ny}x{nz} grid: iso level {iso} not crossed")
        return IsosurfaceResult(TriangleMesh.empty(), np.zeros((0, 2), dtype=np.int64))

    unique_keys, inverse = np.unique(keys.ravel(), return_inverse=True)
    faces = inverse.reshape(-1, 3)

    axis = unique_keys % 3
    flat_a = unique_keys // 3
    ia, ja, ka = np.unravel_index(flat_a, values.shape)
    step = np.eye(3, dtype=np.int64)[axis]
    ib, jb, kb = ia + step[:, 0], ja + step[:, 1], ka + step[:, 2]
    flat_b = np.ravel_multi_index((ib, jb, kb), values.shape)

    va = values[ia, ja, ka]
    vb = values[ib, jb, kb]
    t = (iso - va) / (vb - va)

    lattice = np.stack([ia, ja, ka], axis=1).astype(np.float64) + t[:, None] * step
    vertices = grid.lo + lattice * grid.spacing

    mesh = TriangleMesh(vertices, faces)
    logger.info(
        f"Marching cubes on {nx}x{ny}x{nz} grid: {mesh.n_vertices} vertices, {mesh.n_faces} faces"
    )
    return IsosurfaceResult(mesh, np.stack([flat_a, flat_b], axis=1))


def marching_cubes(grid: ScalarGrid, iso: float = 0.0, jobs: int = 1) -> TriangleMesh:
    """Isosurface of grid at iso; faces wind so normals point toward values below iso"""

    return extract_isosurface(grid, iso, jobs).mesh
