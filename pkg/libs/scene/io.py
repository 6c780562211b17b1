# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Raster file I/O: PFM depth maps and PNG images/masks.

PFM files are written little-endian with scale -1.0 and bottom-to-top rows as
the format requires. PNG reading and writing goes through Pillow.
"""

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from libs.common.errors import MissingFileError, SchemaError
from libs.scene.types import DepthMap, EntityMask

logger = logging.getLogger(__name__)


def write_pfm(path: str | Path, depth: DepthMap | np.ndarray) -> None:
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    values = np.asarray(values, dtype="<f4")
    height, width = values.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.flipud(values).tobytes())


def read_pfm(path: str | Path) -> DepthMap:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Depth file not found: {path}")

    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind not in (b"Pf", b"PF"):
            raise SchemaError(f"{path} is not a PFM file")
        try:
            width, height = (int(v) for v in f.readline().split())
            scale = float(f.readline().strip())
        except ValueError:
            raise SchemaError(f"Malformed PFM header in {path}")
        channels = 3 if kind == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)

    if data.size != width * height * channels:
        raise SchemaError(f"PFM payload size mismatch in {path}")
    data = data.reshape(height, width, channels)[..., 0]
    return DepthMap(np.flipud(data).astype(np.float64))


def read_image(path: str | Path) -> np.ndarray:
    """RGB image as float64 (H, W, 3) in [0, 1]"""

    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Image file not found: {path}")
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def write_image(path: str | Path, rgb: np.ndarray) -> None:
    """Quantize [0, 1] RGB to 8 bits (round half up) and save as PNG"""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.floor(np.clip(rgb[..., :3], 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def read_mask(path: str | Path) -> EntityMask:
    """Any nonzero pixel on any channel is set"""

    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Mask file not found: {path}")
    with Image.open(path) as img:
        data = np.asarray(img)
    if data.ndim == 3:
        data = data.any(axis=2)
    return EntityMask(data != 0)


def write_mask(path: str | Path, mask: EntityMask | np.ndarray) -> None:
    bits = mask.bits if isinstance(mask, EntityMask) else np.asarray(mask, dtype=bool)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(bits.astype(np.uint8) * 255).save(path, format="PNG")
