# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Desk-scale primitive scenes.

The world is y-up with the ground plane at y = 0. Thing primitives (spheres
and boxes) rest on the ground without interpenetrating; the camera looks down
at them from a fixed pitch and backs off until every primitive centre projects
inside the image margin.
"""

import colorsys
import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from libs.common.errors import DomainError, GenerationError
from libs.geometry.camera import CameraIntrinsics, RigidPose, fov_to_intrinsics, look_at, project
from libs.scene.types import Category

logger = logging.getLogger(__name__)

GROUND_ID = "ground"
IMAGE_MARGIN = 0.05
MAX_BACKOFF_STEPS = 200


class Primitive(BaseModel):
    """
    Analytic shape in world coordinates. size holds the radius (sphere), the
    half extents (box) or the half extents along x and z (plane, normal +y);
    yaw rotates the shape about the world y axis.
    """

    id: str
    kind: Literal["sphere", "box", "plane"]
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0
    albedo: tuple[float, float, float] = (0.5, 0.5, 0.5)
    category: Category = Category.THING

    def check_size(self) -> "Primitive":
        """Raise DomainError for zero or negative dimensions"""
        if self.kind == "sphere" and not self.size[0] > 0:
            raise DomainError(f"Sphere {self.id} needs a positive radius")
        if self.kind == "box" and not min(self.size) > 0:
            raise DomainError(f"Box {self.id} needs positive half extents")
        if self.kind == "plane" and not (self.size[0] > 0 and self.size[2] > 0):
            raise DomainError(f"Plane {self.id} needs positive half extents")
        return self

    @property
    def label(self) -> str:
        return self.kind

    @property
    def rotation(self) -> np.ndarray:
        """Local-to-world rotation"""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

    @property
    def pose(self) -> RigidPose:
        """Local-to-world pose"""
        return RigidPose(self.rotation, np.array(self.center))

    @property
    def footprint_radius(self) -> float:
        if self.kind == "sphere":
            return self.size[0]
        return math.hypot(self.size[0], self.size[2])


class SceneSpec(BaseModel):
    """Counts and ranges of a generated scene"""

    things: int = Field(default=3, ge=0)
    kinds: list[Literal["sphere", "box"]] = Field(default_factory=lambda: ["sphere", "box"])
    region_radius: float = Field(default=0.6, gt=0.0)
    size_min: float = Field(default=0.06, gt=0.0)
    size_max: float = Field(default=0.15, gt=0.0)
    min_gap: float = Field(default=0.02, ge=0.0)
    camera_pitch_deg: float = Field(default=40.0, gt=0.0, lt=90.0)
    camera_distance: float = Field(default=1.2, gt=0.0)
    width: int = Field(default=320, ge=8)
    height: int = Field(default=240, ge=8)
    fov_deg: float = Field(default=60.0, gt=0.0, lt=180.0)
    max_attempts: int = Field(default=1000, ge=1)

    @model_validator(mode="after")
    def validate_ranges(self) -> "SceneSpec":
        if self.size_min > self.size_max:
            raise ValueError("size_min must not exceed size_max")
        if not self.kinds:
            raise ValueError("At least one primitive kind is required")
        return self


class PrimitiveScene:
    """Primitives plus the camera that observes them (pose maps world to camera)"""

    def __init__(self, primitives: list[Primitive], intr: CameraIntrinsics, pose: RigidPose, seed: int = 0):
        ids = [p.id for p in primitives]
        if len(set(ids)) != len(ids):
            raise DomainError("Primitive ids must be unique")
        self.primitives = primitives
        self.intr = intr
        self.pose = pose
        self.seed = seed

    def __repr__(self):
        return f"PrimitiveScene(primitives={len(self.primitives)}, seed={self.seed})"

    @property
    def things(self) -> list[Primitive]:
        return [p for p in self.primitives if p.category is Category.THING]

    @property
    def stuff(self) -> list[Primitive]:
        return [p for p in self.primitives if p.category is Category.STUFF]

    def primitive(self, primitive_id: str) -> Primitive:
        for p in self.primitives:
            if p.id == primitive_id:
                return p
        raise KeyError(primitive_id)

    def only(self, primitive_id: str) -> "PrimitiveScene":
        """Same camera, a single primitive"""
        return PrimitiveScene([self.primitive(primitive_id)], self.intr, self.pose, self.seed)


def random_albedo(rng: np.random.Generator) -> tuple[float, float, float]:
    """Saturated color, so shaded pixels stay clearly apart from neutral grey"""

    hue = rng.uniform(0.0, 1.0)
    saturation = rng.uniform(0.6, 0.9)
    value = rng.uniform(0.55, 0.9)
    return colorsys.hsv_to_rgb(hue, saturation, value)


def _place_camera(centers: np.ndarray, spec: SceneSpec) -> tuple[CameraIntrinsics, RigidPose]:
    intr = fov_to_intrinsics(spec.fov_deg, spec.width, spec.height)
    pitch = math.radians(spec.camera_pitch_deg)
    direction = np.array([0.0, math.sin(pitch), -math.cos(pitch)])
    lo_u, hi_u = IMAGE_MARGIN * intr.width, (1.0 - IMAGE_MARGIN) * intr.width
    lo_v, hi_v = IMAGE_MARGIN * intr.height, (1.0 - IMAGE_MARGIN) * intr.height

    distance = spec.camera_distance
    for _ in range(MAX_BACKOFF_STEPS):
        pose = look_at(distance * direction, np.zeros(3), np.array([0.0, -1.0, 0.0]))
        if len(centers) == 0:
            return intr, pose
        proj = project(centers, intr, pose)
        uv = proj.uv
        if (not proj.behind.any()
                and np.all((uv[:, 0] >= lo_u) & (uv[:, 0] <= hi_u))
                and np.all((uv[:, 1] >= lo_v) & (uv[:, 1] <= hi_v))):
            return intr, pose
        distance *= 1.1
    raise GenerationError("Could not place the camera to see every primitive")


def generate_scene(seed: int, spec: SceneSpec | None = None) -> PrimitiveScene:
    """Deterministic thing primitives on a ground plane, seen by one camera"""

    spec = spec or SceneSpec()
    rng = np.random.default_rng(seed)
    things: list[Primitive] = []

    for index in range(spec.things):
        kind = spec.kinds[int(rng.integers(0, len(spec.kinds)))]
        albedo = random_albedo(rng)
        for _attempt in range(spec.max_attempts):
            angle = rng.uniform(0.0, 2.0 * math.pi)
            radius = spec.region_radius * math.sqrt(rng.uniform(0.0, 1.0))
            x, z = radius * math.cos(angle), radius * math.sin(angle)
            if kind == "sphere":
                r = rng.uniform(spec.size_min, spec.size_max)
                candidate = Primitive(id=f"thing_{index:02d}", kind="sphere", center=(x, r, z),
                                      size=(r, r, r), albedo=albedo)
            else:
                half = rng.uniform(spec.size_min, spec.size_max, size=3)
                candidate = Primitive(id=f"thing_{index:02d}", kind="box", center=(x, half[1], z),
                                      size=tuple(half), yaw=rng.uniform(0.0, 0.5 * math.pi), albedo=albedo)

            clear = all(
                math.hypot(x - other.center[0], z - other.center[2])
                >= candidate.footprint_radius + other.footprint_radius + spec.min_gap
                for other in things
            )
            if clear:
                things.append(candidate)
                break
        else:
            raise GenerationError(
                f"Could not place primitive {index} after {spec.max_attempts} attempts",
                {"placed": len(things), "requested": spec.things},
            )

    centers = np.array([p.center for p in things]).reshape(-1, 3)
    intr, pose = _place_camera(centers, spec)

    # Ground large enough that every image ray hits it
    eye = pose.center
    half = 20.0 * max(float(np.linalg.norm(eye)), spec.region_radius)
    ground = Primitive(id=GROUND_ID, kind="plane", center=(0.0, 0.0, 0.0), size=(half, 0.0, half),
                       albedo=(0.62, 0.58, 0.52), category=Category.STUFF)

    scene = PrimitiveScene(things + [ground], intr, pose, seed)
    logger.info(f"Generated scene seed={seed}: {len(things)} things, camera distance {np.linalg.norm(eye):.3f}")
    return scene
