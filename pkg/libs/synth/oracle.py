# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Oracle reconstructions: ground-truth meshes under a known random similarity."""

import math

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.spatial.transform import Rotation

from libs.geometry.camera import SimilarityTransform
from libs.mesh.types import TriangleMesh


class PerturbationRanges(BaseModel):
    """
    Scale is log-uniform in [scale_min, scale_max]; rotation is a random axis
    with an angle up to rotation_deg; translation is uniform per axis in
    [-translation, translation]; noise is the jitter sigma as a fraction of the
    bounding-box diagonal. The defaults leave a mesh untouched.
    """

    scale_min: float = Field(default=1.0, gt=0.0)
    scale_max: float = Field(default=1.0, gt=0.0)
    rotation_deg: float = Field(default=0.0, ge=0.0, le=180.0)
    translation: float = Field(default=0.0, ge=0.0)
    noise: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def validate_scale_range(self) -> "PerturbationRanges":
        if self.scale_min > self.scale_max:
            raise ValueError("scale_min must not exceed scale_max")
        return self

    @property
    def is_identity(self) -> bool:
        return (self.scale_min == self.scale_max == 1.0 and self.rotation_deg == 0.0
                and self.translation == 0.0 and self.noise == 0.0)


def perturb_reconstruction(mesh: TriangleMesh, seed: int,
                           ranges: PerturbationRanges | None = None) -> tuple[TriangleMesh, SimilarityTransform]:
    """Apply a seeded random similarity, then optional Gaussian vertex jitter"""

    ranges = ranges or PerturbationRanges()
    if ranges.is_identity:
        return mesh.copy(), SimilarityTransform.identity()

    rng = np.random.default_rng(seed)
    if ranges.scale_min == ranges.scale_max:
        scale = ranges.scale_min
    else:
        scale = math.exp(rng.uniform(math.log(ranges.scale_min), math.log(ranges.scale_max)))

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(rng.uniform(-ranges.rotation_deg, ranges.rotation_deg))
    rotation = Rotation.from_rotvec(axis * angle).as_matrix() if angle else np.eye(3)
    translation = rng.uniform(-ranges.translation, ranges.translation, size=3)

    applied = SimilarityTransform(scale, rotation, translation)
    vertices = applied.apply(mesh.vertices)

    if ranges.noise > 0:
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        sigma = ranges.noise * float(np.linalg.norm(hi - lo))
        vertices = vertices + rng.normal(scale=sigma, size=vertices.shape)

    return mesh.with_vertices(vertices), applied
