# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Chamfer distance and F-Score between point sets."""

import numpy as np
from pydantic import BaseModel

from libs.common.errors import DomainError
from libs.mesh.types import PointCloud
from libs.metrics.nn_index import NnIndex

CHAMFER_CONVENTION = "symmetric-mean-l2"


class FScore(BaseModel):
    """Percentages in [0, 100]"""

    precision: float
    recall: float
    f_score: float
    tau: float


def _as_points(cloud: PointCloud | np.ndarray, name: str) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise DomainError(f"Point set {name} is empty")
    return pts


def nearest_distances(a: PointCloud | np.ndarray, b: PointCloud | np.ndarray,
                      batch_size: int = 65536) -> tuple[np.ndarray, np.ndarray]:
    """(d_ab, d_ba): for each point of one set, the distance to the closest point of the other"""

    pa = _as_points(a, "A")
    pb = _as_points(b, "B")
    d_ab, _ = NnIndex(pb, batch_size).query(pa)
    d_ba, _ = NnIndex(pa, batch_size).query(pb)
    return d_ab, d_ba


def chamfer_from_distances(d_ab: np.ndarray, d_ba: np.ndarray) -> float:
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


def f_score_from_distances(d_ab: np.ndarray, d_ba: np.ndarray, tau: float) -> FScore:
    if not tau > 0:
        raise DomainError(f"F-Score threshold must be positive, got {tau}")
    precision = 100.0 * float(np.count_nonzero(d_ab <= tau)) / len(d_ab)
    recall = 100.0 * float(np.count_nonzero(d_ba <= tau)) / len(d_ba)
    if precision + recall == 0:
        f = 0.0
    else:
        f = 2.0 * precision * recall / (precision + recall)
    return FScore(precision=precision, recall=recall, f_score=f, tau=tau)


def chamfer(a: PointCloud | np.ndarray, b: PointCloud | np.ndarray) -> float:
    """Symmetric mean of mean nearest-neighbour L2 distances"""
    return chamfer_from_distances(*nearest_distances(a, b))


def f_score(a: PointCloud | np.ndarray, b: PointCloud | np.ndarray, tau: float) -> float:
    if not tau > 0:
        raise DomainError(f"F-Score threshold must be positive, got {tau}")
    return f_score_from_distances(*nearest_distances(a, b), tau).f_score
