# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Depth rendering of triangle meshes.

Each pixel centre receives the nearest hit of its camera ray, found by
vectorized rasterization: triangles are expanded into the pixel centres of
their screen bounding boxes in bounded chunks, tested with screen-space
barycentrics, and resolved with a z-buffer. Depth is interpolated
perspective-correctly (1/z is linear in screen space).
"""

import numpy as np

from libs.geometry.camera import CameraIntrinsics, SimilarityTransform
from libs.mesh.types import TriangleMesh

MIN_DEPTH = 1e-9
CHUNK_CANDIDATES = 1 << 22
INSIDE_EPS = 1e-12


def render_depth(mesh: TriangleMesh, intr: CameraIntrinsics,
                 transform: SimilarityTransform | None = None,
                 return_faces: bool = False):
    """
    Camera-space z of the nearest surface at every pixel centre (NaN where empty).
    With return_faces, also the index of the visible face (-1 where empty).
    """

    height, width = intr.height, intr.width
    zbuf = np.full(height * width, np.inf)
    face_buf = np.full(height * width, -1, dtype=np.int64)
    if mesh.is_empty:
        depth = np.full((height, width), np.nan)
        return (depth, face_buf.reshape(height, width)) if return_faces else depth

    verts = mesh.vertices if transform is None else transform.apply(mesh.vertices)
    tri = verts[mesh.faces]
    z = tri[:, :, 2]
    front = np.all(z > MIN_DEPTH, axis=1)
    face_ids = np.flatnonzero(front)
    tri = tri[front]
    z = z[front]

    u = intr.fx * tri[:, :, 0] / z + intr.cx
    v = intr.fy * tri[:, :, 1] / z + intr.cy

    # Pixel centres c + 0.5 inside the bounding box
    c0 = np.clip(np.ceil(u.min(axis=1) - 0.5), 0, width).astype(np.int64)
    c1 = np.clip(np.floor(u.max(axis=1) - 0.5) + 1, 0, width).astype(np.int64)
    r0 = np.clip(np.ceil(v.min(axis=1) - 0.5), 0, height).astype(np.int64)
    r1 = np.clip(np.floor(v.max(axis=1) - 0.5) + 1, 0, height).astype(np.int64)
    bw = np.maximum(c1 - c0, 0)
    bh = np.maximum(r1 - r0, 0)
    counts = bw * bh

    area = (u[:, 1] - u[:, 0]) * (v[:, 2] - v[:, 0]) - (u[:, 2] - u[:, 0]) * (v[:, 1] - v[:, 0])
    usable = (counts > 0) & (np.abs(area) > 0)
    order = np.flatnonzero(usable)

    start = 0
    while start < len(order):
        cum = np.cumsum(counts[order[start:]])
        stop = start + max(1, int(np.searchsorted(cum, CHUNK_CANDIDATES, side="right")))
        sel = order[start:stop]
        start = stop

        n = counts[sel]
        owner = np.repeat(np.arange(len(sel)), n)
        offsets = np.arange(int(n.sum())) - np.repeat(np.cumsum(n) - n, n)
        t = sel[owner]
        cols = c0[t] + offsets % bw[t]
        rows = r0[t] + offsets // bw[t]
        px = cols + 0.5
        py = rows + 0.5

        ut, vt, a = u[t], v[t], area[t]
        w0 = ((ut[:, 1] - px) * (vt[:, 2] - py) - (ut[:, 2] - px) * (vt[:, 1] - py)) / a
        w1 = ((ut[:, 2] - px) * (vt[:, 0] - py) - (ut[:, 0] - px) * (vt[:, 2] - py)) / a
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -INSIDE_EPS) & (w1 >= -INSIDE_EPS) & (w2 >= -INSIDE_EPS)
        if not inside.any():
            continue

        t = t[inside]
        zt = z[t]
        inv_z = w0[inside] / zt[:, 0] + w1[inside] / zt[:, 1] + w2[inside] / zt[:, 2]
        depth = 1.0 / inv_z
        pix = rows[inside] * width + cols[inside]

        np.minimum.at(zbuf, pix, depth)
        if return_faces:
            # Lowest face id among this chunk's nearest hits
            winner = depth == zbuf[pix]
            cand_face = face_ids[t[winner]]
            cand_pix = pix[winner]
            order_idx = np.lexsort((cand_face, cand_pix))
            cand_pix, cand_face = cand_pix[order_idx], cand_face[order_idx]
            first = np.ones(len(cand_pix), dtype=bool)
            first[1:] = cand_pix[1:] != cand_pix[:-1]
            face_buf[cand_pix[first]] = cand_face[first]

    depth = np.where(np.isfinite(zbuf), zbuf, np.nan).reshape(height, width)
    if return_faces:
        return depth, face_buf.reshape(height, width)
    return depth
