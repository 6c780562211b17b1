# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Instance crops for object reconstruction.

ReprojectionOperator re-renders the visible instance points through the
per-instance virtual camera (z-buffered point splatting, colors copied, never
blended). RawCropOperator is the ablation path: a square image crop around
the mask, resampled to the crop resolution, that a reconstructor interprets
as if the virtual camera had taken it.
"""

import logging

import numpy as np
from pydantic import BaseModel

from libs.common.config import CameraSettings
from libs.common.errors import DimensionError
from libs.geometry.camera import (
    CameraIntrinsics,
    SimilarityTransform,
    VirtualCamera,
    fit_virtual_camera,
    project,
    unproject,
)
from libs.mesh.types import PointCloud
from libs.scene.types import NEUTRAL, DepthMap, EntityMask, InstanceRecord

logger = logging.getLogger(__name__)

AMODAL_THRESHOLD = 2.0 / 255.0


class CaptureCamera:
    """Camera that actually produced the crop pixels: view space -> capture frame, then intrinsics"""

    def __init__(self, intr: CameraIntrinsics, transform: SimilarityTransform):
        self.intr = intr
        self.transform = transform

    def to_dict(self) -> dict:
        return {"intrinsics": self.intr.model_dump(), "transform": self.transform.to_dict()}


class SceneView(BaseModel):
    """Scene-level inputs shared by every instance of a run"""

    model_config = {"arbitrary_types_allowed": True}

    image: np.ndarray
    depth: DepthMap
    intr: CameraIntrinsics


class NormalizedCrop:
    """Square crop of one instance with its virtual camera"""

    def __init__(self, rgb: np.ndarray, mask: EntityMask, depth: DepthMap, camera: VirtualCamera,
                 capture: CaptureCamera, mode: str = "reprojection",
                 source_bbox: tuple[int, int, int] | None = None):
        res = camera.intr.width
        if rgb.shape[:2] != (res, res) or mask.shape != (res, res) or depth.shape != (res, res):
            raise DimensionError("Crop rgb, mask and depth must share the crop resolution")
        self.rgb = rgb
        self.mask = mask
        self.depth = depth
        self.camera = camera
        self.capture = capture
        self.mode = mode
        self.source_bbox = source_bbox

    def __repr__(self):
        return f"NormalizedCrop(res={self.resolution}, mode='{self.mode}', mask={self.mask.count})"

    @property
    def resolution(self) -> int:
        return self.camera.intr.width

    def replace(self, rgb: np.ndarray, mask: EntityMask) -> "NormalizedCrop":
        return NormalizedCrop(rgb, mask, self.depth, self.camera, self.capture, self.mode, self.source_bbox)


def amodal_mask(rgb: np.ndarray) -> EntityMask:
    """Pixels differing from the neutral value by more than 2/255 on any channel"""
    return EntityMask(np.any(np.abs(np.asarray(rgb)[..., :3] - NEUTRAL) > AMODAL_THRESHOLD, axis=-1))


def _scatter_nearest(targets: np.ndarray, depth: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Index of the winning candidate per distinct target: nearest depth, then lowest order"""

    sort = np.lexsort((order, depth, targets))
    first = np.ones(len(sort), dtype=bool)
    first[1:] = targets[sort][1:] != targets[sort][:-1]
    return sort[first]


class ReprojectionOperator:
    """Splat visible instance points into the virtual camera image"""

    mode = "reprojection"

    def __init__(self, settings: CameraSettings):
        self.settings = settings

    def fit_camera(self, cloud: PointCloud) -> VirtualCamera:
        return fit_virtual_camera(cloud, self.settings.crop_res, self.settings.crop_fov_deg,
                                  self.settings.crop_distance)

    def capture_for(self, camera: VirtualCamera, source_intr: CameraIntrinsics,
                    source_bbox=None) -> CaptureCamera:
        return CaptureCamera(camera.intr, camera.forward)

    def splat(self, cloud: PointCloud, camera: VirtualCamera, source_intr: CameraIntrinsics,
              source_bbox=None) -> tuple[np.ndarray, EntityMask, DepthMap]:
        """Z-buffered splat of colored view-space points; untouched pixels are neutral"""

        res = camera.intr.width
        rgb = np.full((res, res, 3), NEUTRAL)
        mask = np.zeros((res, res), dtype=bool)
        depth = np.full((res, res), np.nan)
        if cloud.is_empty:
            return rgb, EntityMask(mask), DepthMap(depth)

        pc = camera.forward.apply(cloud.points)
        proj = project(pc, camera.intr)
        ok = ~proj.behind
        cols = np.floor(proj.uv[ok, 0]).astype(np.int64)
        rows = np.floor(proj.uv[ok, 1]).astype(np.int64)
        z_crop = proj.depth[ok]
        z_src = cloud.points[ok, 2]
        point_ids = np.flatnonzero(ok)

        # Source-pixel to crop-pixel magnification of every point
        magnification = (z_src * camera.intr.fx * camera.normalization.scale) / (source_intr.fx * z_crop)
        wide = magnification > self.settings.splat_widen_magnification

        offsets = [(0, 0)] + [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
        cand_rows, cand_cols, cand_pts = [rows], [cols], [np.arange(len(rows))]
        for dr, dc in offsets[1:]:
            idx = np.flatnonzero(wide)
            cand_rows.append(rows[idx] + dr)
            cand_cols.append(cols[idx] + dc)
            cand_pts.append(idx)
        r = np.concatenate(cand_rows)
        c = np.concatenate(cand_cols)
        p = np.concatenate(cand_pts)

        inside = (r >= 0) & (r < res) & (c >= 0) & (c < res)
        r, c, p = r[inside], c[inside], p[inside]
        if len(p) == 0:
            return rgb, EntityMask(mask), DepthMap(depth)

        targets = r * res + c
        win = _scatter_nearest(targets, z_crop[p], point_ids[p])
        wr, wc, wp = r[win], c[win], p[win]

        if cloud.colors is not None:
            rgb[wr, wc] = cloud.colors[point_ids[wp]]
        mask[wr, wc] = True
        depth[wr, wc] = z_crop[wp]
        return rgb, EntityMask(mask), DepthMap(depth)

    def reproject(self, inst: InstanceRecord, scene: SceneView) -> NormalizedCrop:
        cloud = unproject(scene.depth, scene.intr, inst.mask, colors=scene.image)
        camera = self.fit_camera(cloud)
        rgb, mask, depth = self.splat(cloud, camera, scene.intr)
        logger.debug(f"Reprojected {inst.instance_id}: {len(cloud)} points -> {mask.count} crop pixels")
        return NormalizedCrop(rgb, mask, depth, camera, self.capture_for(camera, scene.intr), self.mode)


def square_bbox(bbox: tuple[int, int, int, int]) -> tuple[int, int, int]:
    """(row_start, col_start, side) of the square centred on a mask bounding box"""

    r0, r1, c0, c1 = bbox
    side = max(r1 - r0, c1 - c0)
    rs = r0 - (side - (r1 - r0)) // 2
    cs = c0 - (side - (c1 - c0)) // 2
    return rs, cs, side


class RawCropOperator:
    """Image-space crop interpreted as a virtual-camera view (no reprojection)"""

    mode = "raw_crop"

    def __init__(self, settings: CameraSettings):
        self.settings = settings

    def fit_camera(self, cloud: PointCloud) -> VirtualCamera:
        return fit_virtual_camera(cloud, self.settings.crop_res, self.settings.crop_fov_deg,
                                  self.settings.crop_distance)

    def capture_for(self, camera: VirtualCamera, source_intr: CameraIntrinsics,
                    source_bbox) -> CaptureCamera:
        rs, cs, side = source_bbox
        res = self.settings.crop_res
        return CaptureCamera(source_intr.crop(rs, cs, side, side).resized(res, res),
                             SimilarityTransform.identity())

    def splat(self, cloud: PointCloud, camera: VirtualCamera, source_intr: CameraIntrinsics,
              source_bbox) -> tuple[np.ndarray, EntityMask, DepthMap]:
        """Nearest-neighbour resample of per-pixel point data into the square crop"""

        rs, cs, side = source_bbox
        res = camera.intr.width
        rgb = np.full((res, res, 3), NEUTRAL)
        mask = np.zeros((res, res), dtype=bool)
        depth = np.full((res, res), np.nan)
        if cloud.is_empty:
            return rgb, EntityMask(mask), DepthMap(depth)

        # Crop pixel -> source pixel lookup
        src = np.floor((np.arange(res) + 0.5) * side / res).astype(np.int64)
        lookup = np.full((side, side), -1, dtype=np.int64)
        pr = cloud.pixels[:, 0] - rs
        pc = cloud.pixels[:, 1] - cs
        keep = (pr >= 0) & (pr < side) & (pc >= 0) & (pc < side)
        lookup[pr[keep], pc[keep]] = np.flatnonzero(keep)

        idx = lookup[np.ix_(src, src)]
        hit = idx >= 0
        z_assumed = camera.forward.apply(cloud.points)[:, 2]
        if cloud.colors is not None:
            rgb[hit] = cloud.colors[idx[hit]]
        mask[hit] = True
        depth[hit] = z_assumed[idx[hit]]
        return rgb, EntityMask(mask), DepthMap(depth)

    def reproject(self, inst: InstanceRecord, scene: SceneView) -> NormalizedCrop:
        cloud = unproject(scene.depth, scene.intr, inst.mask, colors=scene.image)
        camera = self.fit_camera(cloud)
        bbox = square_bbox(inst.mask.bbox)
        rgb, mask, depth = self.splat(cloud, camera, scene.intr, bbox)
        return NormalizedCrop(rgb, mask, depth, camera, self.capture_for(camera, scene.intr, bbox), self.mode, bbox)
