# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Watertight triangle meshes of scene primitives, with outward winding."""

import numpy as np

from libs.common.errors import DomainError
from libs.geometry.camera import CameraIntrinsics, RigidPose, project
from libs.mesh.types import TriangleMesh
from libs.synth.primitives import Primitive

MIN_SPHERE_TESSELLATION = 8


def uv_sphere(radius: float, tessellation: int) -> TriangleMesh:
    """tessellation segments around the equator, tessellation // 2 bands pole to pole"""

    if tessellation < MIN_SPHERE_TESSELLATION:
        raise DomainError(f"Sphere tessellation must be at least {MIN_SPHERE_TESSELLATION}")
    if not radius > 0:
        raise DomainError("Sphere radius must be positive")

    segments = tessellation
    bands = tessellation // 2
    theta = np.pi * np.arange(1, bands) / bands
    phi = 2.0 * np.pi * np.arange(segments) / segments
    t, p = np.meshgrid(theta, phi, indexing="ij")
    ring = np.stack([np.sin(t) * np.cos(p), np.cos(t), np.sin(t) * np.sin(p)], axis=-1).reshape(-1, 3)
    vertices = radius * np.concatenate([[[0.0, 1.0, 0.0]], ring, [[0.0, -1.0, 0.0]]])

    north, south = 0, len(vertices) - 1

    def ring_index(i, j):
        return 1 + i * segments + (j % segments)

    j = np.arange(segments)
    faces = [np.stack([np.full(segments, north), ring_index(0, j + 1), ring_index(0, j)], axis=1)]
    for i in range(bands - 2):
        a, b = ring_index(i, j), ring_index(i, j + 1)
        c, d = ring_index(i + 1, j), ring_index(i + 1, j + 1)
        faces.append(np.stack([a, b, c], axis=1))
        faces.append(np.stack([b, d, c], axis=1))
    last = bands - 2
    faces.append(np.stack([ring_index(last, j), ring_index(last, j + 1), np.full(segments, south)], axis=1))

    return TriangleMesh(vertices, np.concatenate(faces))


def box(half_extents) -> TriangleMesh:
    half = np.asarray(half_extents, dtype=np.float64).reshape(3)
    if not np.all(half > 0):
        raise DomainError("Box extents must be positive")

    bits = np.array([[(i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(8)])
    vertices = (2 * bits - 1) * half

    faces = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for sign in (1, 0):
            corners = []
            for bu, bv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                b = [0, 0, 0]
                b[axis], b[u], b[v] = sign, bu, bv
                corners.append(4 * b[0] + 2 * b[1] + b[2])
            quad = [(0, 1, 2), (0, 2, 3)] if sign else [(0, 2, 1), (0, 3, 2)]
            faces.extend([corners[x], corners[y], corners[z]] for x, y, z in quad)

    return TriangleMesh(vertices, np.array(faces))


def plane_grid(half_x: float, half_z: float, tessellation: int) -> TriangleMesh:
    """Grid over [-half_x, half_x] x [-half_z, half_z] at y = 0, facing +y"""

    if not (half_x > 0 and half_z > 0):
        raise DomainError("Plane extents must be positive")
    if tessellation < 1:
        raise DomainError("Plane tessellation must be at least 1")

    n = tessellation + 1
    xs = np.linspace(-half_x, half_x, n)
    zs = np.linspace(-half_z, half_z, n)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    vertices = np.stack([gx, np.zeros_like(gx), gz], axis=-1).reshape(-1, 3)

    i, k = np.meshgrid(np.arange(tessellation), np.arange(tessellation), indexing="ij")
    v00 = (i * n + k).ravel()
    v10 = ((i + 1) * n + k).ravel()
    v01 = (i * n + k + 1).ravel()
    v11 = ((i + 1) * n + k + 1).ravel()
    faces = np.concatenate([np.stack([v00, v01, v10], axis=1), np.stack([v10, v01, v11], axis=1)])
    return TriangleMesh(vertices, faces)


def mesh_of_primitive(prim: Primitive, tessellation: int = 48) -> TriangleMesh:
    """World-space mesh of one primitive"""

    prim.check_size()
    if prim.kind == "sphere":
        local = uv_sphere(prim.size[0], tessellation)
    elif prim.kind == "box":
        local = box(prim.size)
    else:
        local = plane_grid(prim.size[0], prim.size[2], tessellation)
    return local.with_vertices(prim.pose.apply(local.vertices))


def visible_ground(prim: Primitive, intr: CameraIntrinsics, pose: RigidPose, depth_limit: float,
                   tessellation: int) -> TriangleMesh:
    """
    Ground grid restricted to what the camera can see: the grid spans the
    footprint of the image on the plane up to depth_limit, and faces whose
    centroid falls outside the image are dropped.
    """

    corners = np.array([
        [0.0, 0.0], [intr.width, 0.0], [0.0, intr.height], [intr.width, intr.height],
    ])
    dirs = np.stack([
        (corners[:, 0] - intr.cx) / intr.fx,
        (corners[:, 1] - intr.cy) / intr.fy,
        np.ones(4),
    ], axis=1)
    world_dirs = dirs @ pose.rotation
    eye = pose.center
    height = eye[1] - prim.center[1]

    # Image corners hit the plane, or are clamped at depth_limit
    hits = []
    for d in world_dirs:
        t = height / -d[1] if d[1] < 0 else depth_limit
        hits.append(eye + min(t, depth_limit) * d)
    hits = np.array(hits)

    lo = hits[:, [0, 2]].min(axis=0)
    hi = hits[:, [0, 2]].max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    local = plane_grid(float(half[0]), float(half[1]), tessellation)
    grid = local.with_vertices(local.vertices + np.array([center[0], prim.center[1], center[1]]))

    centroids = grid.triangles().mean(axis=1)
    proj = project(centroids, intr, pose)
    uv = np.nan_to_num(proj.uv, nan=-1.0)
    inside = (~proj.behind) & (uv[:, 0] >= 0) & (uv[:, 0] < intr.width) \
        & (uv[:, 1] >= 0) & (uv[:, 1] < intr.height) & (proj.depth <= depth_limit)
    return grid.submesh(inside)
