# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Exact nearest-neighbour index over a 3D point set."""

import numpy as np
from scipy.spatial import cKDTree

from libs.common.errors import DomainError
from libs.mesh.types import PointCloud


class NnIndex:
    """Median-split kd-tree; returned distances are recomputed from the matched points"""

    def __init__(self, points: PointCloud | np.ndarray, batch_size: int = 65536):
        pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
        pts = pts.reshape(-1, 3)
        if len(pts) == 0:
            raise DomainError("Cannot index an empty point set")
        self.points = pts
        self.batch_size = batch_size
        self._tree = cKDTree(pts, balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, queries: PointCloud | np.ndarray, workers: int = -1) -> tuple[np.ndarray, np.ndarray]:
        """Distance to and index of the nearest indexed point for every query"""

        q = queries.points if isinstance(queries, PointCloud) else np.asarray(queries, dtype=np.float64)
        q = q.reshape(-1, 3)
        idx = np.empty(len(q), dtype=np.int64)
        for start in range(0, len(q), self.batch_size):
            chunk = q[start:start + self.batch_size]
            _, found = self._tree.query(chunk, k=1, workers=workers)
            idx[start:start + len(chunk)] = found

        diff = self.points[idx] - q
        dist = np.sqrt(diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2])
        return dist, idx
