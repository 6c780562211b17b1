# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Area-weighted surface point sampling."""

import numpy as np

from libs.common.errors import DegenerateMeshError
from libs.mesh.types import PointCloud, TriangleMesh


def sample_surface(mesh: TriangleMesh, n: int, seed: int = 0, return_faces: bool = False):
    """
    Draw n points uniformly over the mesh surface.
    Faces are picked by inverting the cumulative area; barycentrics use the square-root trick.
    """

    areas = mesh.face_areas() if mesh.n_faces else np.zeros(0)
    total = float(areas.sum())
    if not total > 0:
        raise DegenerateMeshError("Cannot sample a mesh with zero surface area",
                                  {"faces": mesh.n_faces})

    rng = np.random.default_rng(seed)
    cdf = np.cumsum(areas)
    picks = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    picks = np.minimum(picks, mesh.n_faces - 1)

    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a = 1.0 - r1
    b = r1 * (1.0 - r2)
    c = r1 * r2

    tri = mesh.triangles()[picks]
    points = a[:, None] * tri[:, 0] + b[:, None] * tri[:, 1] + c[:, None] * tri[:, 2]

    colors = None
    if mesh.vertex_colors is not None:
        fc = mesh.vertex_colors[mesh.faces[picks]]
        colors = a[:, None] * fc[:, 0] + b[:, None] * fc[:, 1] + c[:, None] * fc[:, 2]

    cloud = PointCloud(points, colors)
    if return_faces:
        return cloud, picks
    return cloud
