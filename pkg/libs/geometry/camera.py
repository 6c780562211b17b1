# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Pinhole camera math.

Camera frames follow the image convention: x to the right, y down the image
rows, z along the viewing direction. Poses map world (or view-space) points
into the camera frame, ``p_cam = R @ p + t``.
"""

import logging
import math
from typing import Any, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from libs.common.errors import DegenerateInstanceError, DimensionError, DomainError
from libs.mesh.types import PointCloud, TriangleMesh
from libs.scene.types import DepthMap, EntityMask

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-9
PARALLEL_TOL = 1e-6


class CameraIntrinsics(BaseModel):
    """Pinhole intrinsics in pixels"""

    model_config = ConfigDict(frozen=True)

    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    width: int = Field(ge=1)
    height: int = Field(ge=1)

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def crop(self, r0: int, c0: int, height: int, width: int) -> "CameraIntrinsics":
        """Intrinsics of the sub-window starting at (r0, c0)"""
        return CameraIntrinsics(
            fx=self.fx, fy=self.fy, cx=self.cx - c0, cy=self.cy - r0,
            width=width, height=height,
        )

    def resized(self, width: int, height: int) -> "CameraIntrinsics":
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(
            fx=self.fx * sx, fy=self.fy * sy, cx=self.cx * sx, cy=self.cy * sy,
            width=width, height=height,
        )


def _check_rotation(rotation: np.ndarray) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise DimensionError(f"Rotation must be 3x3, got {rotation.shape}")
    if not np.allclose(rotation.T @ rotation, np.eye(3), atol=ORTHONORMAL_TOL, rtol=0.0):
        raise DomainError("Rotation is not orthonormal")
    if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOL:
        raise DomainError("Rotation determinant is not +1")
    return rotation


class RigidPose:
    """World-to-camera rigid transform"""

    def __init__(self, rotation: np.ndarray | None = None, translation: np.ndarray | None = None):
        self.rotation = _check_rotation(np.eye(3) if rotation is None else rotation)
        self.translation = (
            np.zeros(3) if translation is None
            else np.asarray(translation, dtype=np.float64).reshape(3)
        )

    def __repr__(self):
        return f"RigidPose(t={self.translation.tolist()})"

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls()

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates"""
        return -self.rotation.T @ self.translation

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidPose":
        rt = self.rotation.T
        return RigidPose(rt, -rt @ self.translation)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self after other"""
        return RigidPose(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def to_dict(self) -> dict[str, Any]:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RigidPose":
        return cls(np.array(data["rotation"]), np.array(data["translation"]))


class SimilarityTransform:
    """x -> scale * R x + t"""

    def __init__(self, scale: float = 1.0, rotation: np.ndarray | None = None,
                 translation: np.ndarray | None = None):
        if not scale > 0 or not math.isfinite(scale):
            raise DomainError(f"Similarity scale must be positive, got {scale}")
        self.scale = float(scale)
        self.rotation = _check_rotation(np.eye(3) if rotation is None else rotation)
        self.translation = (
            np.zeros(3) if translation is None
            else np.asarray(translation, dtype=np.float64).reshape(3)
        )

    def __repr__(self):
        return f"SimilarityTransform(scale={self.scale:.6g}, t={self.translation.tolist()})"

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    @classmethod
    def from_pose(cls, pose: RigidPose) -> "SimilarityTransform":
        return cls(1.0, pose.rotation, pose.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) @ self.rotation.T) + self.translation

    def inverse(self) -> "SimilarityTransform":
        rt = self.rotation.T
        inv_scale = 1.0 / self.scale
        return SimilarityTransform(inv_scale, rt, -inv_scale * (rt @ self.translation))

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """self after other"""
        return SimilarityTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * (self.rotation @ other.translation) + self.translation,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "scale": self.scale,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimilarityTransform":
        return cls(float(data["scale"]), np.array(data["rotation"]), np.array(data["translation"]))


class Projection(NamedTuple):
    uv: np.ndarray      # (N, 2) continuous pixel coordinates, NaN when behind
    depth: np.ndarray   # (N,) camera-space z
    behind: np.ndarray  # (N,) bool, z <= 0


class VirtualCamera:
    """Normalization plus the fixed-distance look-at camera of one instance"""

    def __init__(self, normalization: SimilarityTransform, pose: RigidPose, intr: CameraIntrinsics):
        self.normalization = normalization
        self.pose = pose
        self.intr = intr

    def __repr__(self):
        return f"VirtualCamera(scale={self.normalization.scale:.6g}, res={self.intr.width})"

    @property
    def forward(self) -> SimilarityTransform:
        """View space -> virtual camera frame (pose after normalization)"""
        return SimilarityTransform.from_pose(self.pose).compose(self.normalization)

    def to_dict(self) -> dict[str, Any]:
        return {
            "normalization": self.normalization.to_dict(),
            "pose": self.pose.to_dict(),
            "intrinsics": self.intr.model_dump(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "VirtualCamera":
        return cls(
            SimilarityTransform.from_dict(data["normalization"]),
            RigidPose.from_dict(data["pose"]),
            CameraIntrinsics(**data["intrinsics"]),
        )


def fov_to_intrinsics(fov_deg: float, width: int, height: int) -> CameraIntrinsics:
    """Square-pixel intrinsics whose field of view spans the longer image side"""

    if not 0.0 < fov_deg < 180.0:
        raise DomainError(f"Field of view must lie in (0, 180) degrees, got {fov_deg}")
    if width < 1 or height < 1:
        raise DomainError(f"Image size must be positive, got {width}x{height}")

    f = (max(width, height) / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return CameraIntrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) camera-frame directions with unit z through every pixel centre"""

    cols = (np.arange(intr.width) + 0.5 - intr.cx) / intr.fx
    rows = (np.arange(intr.height) + 0.5 - intr.cy) / intr.fy
    x, y = np.meshgrid(cols, rows)
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def unproject(depth: DepthMap, intr: CameraIntrinsics, mask: EntityMask | None = None,
              colors: np.ndarray | None = None) -> PointCloud:
    """Lift every valid (and masked) pixel to a camera-frame point"""

    if depth.shape != intr.shape:
        raise DimensionError(
            f"Depth map {depth.width}x{depth.height} does not match intrinsics {intr.width}x{intr.height}"
        )
    select = depth.validity
    if mask is not None:
        if mask.shape != depth.shape:
            raise DimensionError("Mask resolution does not match depth resolution")
        select = select & mask.bits
    if colors is not None and colors.shape[:2] != depth.shape:
        raise DimensionError("Color image resolution does not match depth resolution")

    rows, cols = np.nonzero(select)
    d = depth.values[rows, cols]
    x = (cols + 0.5 - intr.cx) * d / intr.fx
    y = (rows + 0.5 - intr.cy) * d / intr.fy
    points = np.stack([x, y, d], axis=1)

    return PointCloud(
        points,
        None if colors is None else colors[rows, cols, :3],
        np.stack([rows, cols], axis=1),
    )


def project(points: PointCloud | np.ndarray, intr: CameraIntrinsics,
            pose: RigidPose | None = None) -> Projection:
    """Project points to continuous pixel coordinates; never fails, flags points behind the camera"""

    p = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pose is not None:
        p = pose.apply(p)

    z = p[:, 2]
    behind = z <= 0
    uv = np.full((len(p), 2), np.nan)
    front = ~behind
    uv[front, 0] = intr.fx * p[front, 0] / z[front] + intr.cx
    uv[front, 1] = intr.fy * p[front, 1] / z[front] + intr.cy
    return Projection(uv, z.copy(), behind)


def look_at(eye: np.ndarray, target: np.ndarray, down_hint: np.ndarray) -> RigidPose:
    """
    Camera at eye looking at target.
    The image-down axis follows down_hint; when the viewing direction is parallel
    to the hint within 1e-6, +Z is used instead.
    """

    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise DomainError("look_at eye and target coincide")
    z = forward / norm

    hint = np.asarray(down_hint, dtype=np.float64)
    hint = hint / np.linalg.norm(hint)
    x = np.cross(hint, z)
    if np.linalg.norm(x) < PARALLEL_TOL:
        x = np.cross(np.array([0.0, 0.0, 1.0]), z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)

    rotation = np.stack([x, y, z])
    return RigidPose(rotation, -rotation @ eye)


def fit_virtual_camera(points: PointCloud | np.ndarray, crop_res: int = 512,
                       fov_deg: float = 49.1, distance: float = 1.5) -> VirtualCamera:
    """
    Normalize an instance cloud into the unit cube and place the crop camera.
    The camera sits at ``distance`` from the origin on the side of the source
    camera and looks at the origin.
    """

    p = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(p) < 4:
        raise DegenerateInstanceError(f"Need at least 4 points for a virtual camera, got {len(p)}",
                                      {"points": int(len(p))})

    lo, hi = p.min(axis=0), p.max(axis=0)
    extent = float((hi - lo).max())
    if not extent > 0:
        raise DegenerateInstanceError("Instance point cloud has zero extent", {"points": int(len(p))})

    center = 0.5 * (lo + hi)
    normalization = SimilarityTransform(1.0 / extent, np.eye(3), -center / extent)

    # The source camera sits at the view-space origin
    toward_source = normalization.translation
    norm = np.linalg.norm(toward_source)
    if norm < PARALLEL_TOL:
        direction = np.array([0.0, 0.0, -1.0])
    else:
        direction = toward_source / norm
    eye = distance * direction

    pose = look_at(eye, np.zeros(3), np.array([0.0, 1.0, 0.0]))
    intr = fov_to_intrinsics(fov_deg, crop_res, crop_res)
    return VirtualCamera(normalization, pose, intr)


def object_to_view(mesh: TriangleMesh, normalization: SimilarityTransform, pose: RigidPose,
                   scale: float) -> TriangleMesh:
    """
    Map a mesh from the virtual camera frame back into view space.

    The mesh is given in the virtual camera frame, whose origin is the camera
    centre, and s scales about that origin: every vertex slides along its own
    camera ray, so the crop silhouette is unchanged and s is the depth ratio
    the alignment measures. Pose and normalization are undone afterwards.
    """

    if not scale > 0 or not math.isfinite(scale):
        raise DomainError(f"Placement scale must be positive, got {scale}")

    forward = SimilarityTransform.from_pose(pose).compose(normalization)
    vertices = forward.inverse().apply(scale * mesh.vertices)
    return TriangleMesh(vertices, mesh.faces.copy(), mesh.vertex_colors, mesh.groups)
