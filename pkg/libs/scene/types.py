# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Per-pixel scene analysis products: depth maps, entity masks and instance
records. Images are float64 arrays in [0, 1]; the neutral fill value used for
empty crop regions is 127.5 / 255 on every channel.
"""

from enum import Enum
from pathlib import Path

import numpy as np

from libs.common.errors import DimensionError, DomainError

NEUTRAL = 127.5 / 255.0


class Category(str, Enum):
    """Stuff (amorphous background) or thing (countable object)"""

    THING = "thing"
    STUFF = "stuff"


class DepthMap:
    """Row-major depth grid; a pixel is valid when finite and strictly positive"""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError(f"Depth map must be 2D, got shape {values.shape}")
        self.values = values

    def __repr__(self):
        return f"DepthMap({self.width}x{self.height}, valid={int(self.validity.sum())})"

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def validity(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.isfinite(self.values) & (self.values > 0)

    def scaled(self, s: float, t: float = 0.0) -> "DepthMap":
        """Affine map applied to valid pixels only; invalid pixels stay invalid"""

        out = np.full(self.shape, np.nan)
        valid = self.validity
        out[valid] = s * self.values[valid] + t
        return DepthMap(out)

    def region(self, bbox: tuple[int, int, int, int]) -> "DepthMap":
        r0, r1, c0, c1 = bbox
        return DepthMap(self.values[r0:r1, c0:c1].copy())


class EntityMask:
    """Boolean per-pixel membership of one entity"""

    def __init__(self, bits: np.ndarray):
        bits = np.asarray(bits).astype(bool)
        if bits.ndim != 2:
            raise DimensionError(f"Entity mask must be 2D, got shape {bits.shape}")
        self.bits = bits

    def __repr__(self):
        return f"EntityMask({self.width}x{self.height}, set={self.count})"

    @classmethod
    def empty(cls, height: int, width: int) -> "EntityMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    @property
    def bbox(self) -> tuple[int, int, int, int] | None:
        """(row_start, row_stop, col_start, col_stop) or None when empty"""

        if self.is_empty:
            return None
        rows = np.flatnonzero(self.bits.any(axis=1))
        cols = np.flatnonzero(self.bits.any(axis=0))
        return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1

    def union(self, other: "EntityMask") -> "EntityMask":
        if other.shape != self.shape:
            raise DimensionError("Cannot combine masks of different resolution")
        return EntityMask(self.bits | other.bits)


class InstanceRecord:
    """One ingested entity: its mask, label, category and optional external products"""

    def __init__(
        self,
        instance_id: str,
        mask: EntityMask,
        label: str = "",
        category: Category | str = Category.THING,
        crop_rgb: np.ndarray | None = None,
        crop_depth: DepthMap | None = None,
        recon_mesh_path: Path | None = None,
        gt_mesh_path: Path | None = None,
        amodal_rgb_path: Path | None = None,
        amodal_depth_path: Path | None = None,
        completion_path: Path | None = None,
    ):
        try:
            self.category = Category(category)
        except ValueError:
            raise DomainError(f"Unknown category '{category}' for instance {instance_id}")

        self.instance_id = instance_id
        self.mask = mask
        self.label = label
        self.crop_rgb = crop_rgb
        self.crop_depth = crop_depth
        self.recon_mesh_path = recon_mesh_path
        self.gt_mesh_path = gt_mesh_path
        self.amodal_rgb_path = amodal_rgb_path
        self.amodal_depth_path = amodal_depth_path
        self.completion_path = completion_path

        bbox = mask.bbox
        if bbox is not None:
            h, w = bbox[1] - bbox[0], bbox[3] - bbox[2]
            if crop_rgb is not None and crop_rgb.shape[:2] != (h, w):
                raise DimensionError(f"crop_rgb of {instance_id} does not cover the mask bounding box")
            if crop_depth is not None and crop_depth.shape != (h, w):
                raise DimensionError(f"crop_depth of {instance_id} does not cover the mask bounding box")

    def __repr__(self):
        return f"InstanceRecord(id='{self.instance_id}', category='{self.category.value}')"

    @property
    def is_thing(self) -> bool:
        return self.category is Category.THING
