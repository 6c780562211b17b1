# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Amodal completion training pairs.

A target is an unoccluded object render whose background is neutral grey. An
occluder silhouette is laid over it at a seeded random anchor and scale so
that the occluded share of the target mask falls inside the requested range;
the conditioning image is the target with every occluded pixel set to neutral.
"""

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image
from pydantic import BaseModel

from libs.common.errors import CompositionError, DomainError
from libs.geometry.camera import fov_to_intrinsics, look_at
from libs.scene.io import read_image, write_image, write_mask
from libs.scene.types import NEUTRAL, EntityMask
from libs.synth.primitives import Primitive, PrimitiveScene, random_albedo
from libs.synth.render import raycast_render

logger = logging.getLogger(__name__)

BISECTION_STEPS = 40
MAX_RELATIVE_SCALE = 3.0
OBJECT_VIEW_FOV_DEG = 40.0
OBJECT_VIEW_PITCH_DEG = 30.0


class AmodalPair:
    def __init__(self, conditioning: np.ndarray, target: np.ndarray, occluder: EntityMask,
                 prompt: str, occluded_fraction: float, seed: int):
        self.conditioning = conditioning
        self.target = target
        self.occluder = occluder
        self.prompt = prompt
        self.occluded_fraction = occluded_fraction
        self.seed = seed

    def __repr__(self):
        return f"AmodalPair(prompt='{self.prompt}', occluded={self.occluded_fraction:.3f})"


class PairRecord(BaseModel):
    """One line of the dataset index"""

    pair: str
    conditioning: str
    target: str
    occluder: str
    prompt: str
    seed: int
    occluded_fraction: float
    target_id: str
    occluder_id: str


def neutral_target(rgb: np.ndarray, mask: EntityMask) -> np.ndarray:
    """Object colors inside the mask, neutral everywhere else"""
    return np.where(mask.bits[..., None], np.asarray(rgb, dtype=np.float64)[..., :3], NEUTRAL)


def random_object(rng: np.random.Generator, object_id: str) -> Primitive:
    """Sphere or box centred at the origin with a saturated albedo"""

    albedo = random_albedo(rng)
    if rng.uniform() < 0.5:
        r = rng.uniform(0.5, 1.0)
        return Primitive(id=object_id, kind="sphere", center=(0.0, 0.0, 0.0), size=(r, r, r), albedo=albedo)
    half = rng.uniform(0.3, 0.8, size=3)
    return Primitive(id=object_id, kind="box", center=(0.0, 0.0, 0.0), size=tuple(half),
                     yaw=rng.uniform(0.0, 0.5 * np.pi), albedo=albedo)


def object_view(prim: Primitive, resolution: int = 128) -> tuple[np.ndarray, EntityMask]:
    """Unoccluded render of one object centred in a square image, background neutral"""

    radius = float(np.linalg.norm(prim.size))
    half_fov = np.radians(OBJECT_VIEW_FOV_DEG) / 2.0
    distance = 1.25 * radius / np.sin(half_fov)
    pitch = np.radians(OBJECT_VIEW_PITCH_DEG)
    center = np.asarray(prim.center)
    eye = center + distance * np.array([0.0, np.sin(pitch), -np.cos(pitch)])

    pose = look_at(eye, center, np.array([0.0, -1.0, 0.0]))
    intr = fov_to_intrinsics(OBJECT_VIEW_FOV_DEG, resolution, resolution)
    render = raycast_render(PrimitiveScene([prim], intr, pose))
    mask = render.coverage
    return neutral_target(render.rgb, mask), mask


def _place_silhouette(sil: np.ndarray, scale: float, anchor: tuple[int, int],
                      shape: tuple[int, int]) -> np.ndarray:
    """Silhouette resized by scale and centred on anchor, clipped to the image"""

    h, w = sil.shape
    new_h = max(1, int(round(h * scale)))
    new_w = max(1, int(round(w * scale)))
    resized = Image.fromarray(sil.astype(np.uint8) * 255).resize((new_w, new_h), Image.Resampling.NEAREST)
    resized = np.asarray(resized) > 0

    out = np.zeros(shape, dtype=bool)
    r0 = anchor[0] - new_h // 2
    c0 = anchor[1] - new_w // 2
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + new_h, shape[0]), min(c0 + new_w, shape[1])
    if rs < re and cs < ce:
        out[rs:re, cs:ce] = resized[rs - r0:re - r0, cs - c0:ce - c0]
    return out


def compose_amodal_pair(target_rgb: np.ndarray, target_mask: EntityMask, silhouette: EntityMask | np.ndarray,
                        seed: int, occlusion_range: tuple[float, float] = (0.1, 0.5),
                        max_tries: int = 100, prompt: str = "") -> AmodalPair:
    """Conditioning/target pair whose occluded share of the target lies in occlusion_range"""

    lo, hi = occlusion_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise DomainError(f"Invalid occlusion range [{lo}, {hi}]")
    if target_mask.is_empty:
        raise DomainError("Target mask is empty")

    target = neutral_target(target_rgb, target_mask)
    sil_bits = silhouette.bits if isinstance(silhouette, EntityMask) else np.asarray(silhouette, dtype=bool)
    total = target_mask.count

    if not sil_bits.any():
        if lo == 0.0:
            return AmodalPair(target.copy(), target, EntityMask(np.zeros(target_mask.shape, dtype=bool)),
                              prompt, 0.0, seed)
        raise CompositionError("Empty silhouette cannot occlude the target")

    rows, cols = np.nonzero(sil_bits)
    sil = sil_bits[rows.min():rows.max() + 1, cols.min():cols.max() + 1]
    t_rows, t_cols = np.nonzero(target_mask.bits)
    r0, r1, c0, c1 = target_mask.bbox
    # Silhouette scale at which its bbox diagonal matches the target's
    base = np.hypot(r1 - r0, c1 - c0) / np.hypot(*sil.shape)

    rng = np.random.default_rng(seed)
    k_max = MAX_RELATIVE_SCALE * base

    def occluded_share(placed: np.ndarray) -> float:
        return np.count_nonzero(placed & target_mask.bits) / total

    def accept(placed: np.ndarray, share: float) -> AmodalPair:
        conditioning = np.where(placed[..., None], NEUTRAL, target)
        return AmodalPair(conditioning, target, EntityMask(placed), prompt, share, seed)

    for _ in range(max_tries):
        pick = int(rng.integers(0, len(t_rows)))
        anchor = (int(t_rows[pick]), int(t_cols[pick]))

        k = float(rng.uniform(0.0, k_max))
        placed = _place_silhouette(sil, k, anchor, target_mask.shape)
        share = occluded_share(placed)
        if lo <= share <= hi:
            return accept(placed, share)

        # Drawn scale missed the range; search this anchor toward a drawn share
        goal = float(rng.uniform(lo, hi))
        k_lo, k_hi = (k, k_max) if share < lo else (0.0, k)
        for _ in range(BISECTION_STEPS):
            k = 0.5 * (k_lo + k_hi)
            placed = _place_silhouette(sil, k, anchor, target_mask.shape)
            share = occluded_share(placed)
            if lo <= share <= hi:
                return accept(placed, share)
            if share < goal:
                k_lo = k
            else:
                k_hi = k

    raise CompositionError(
        f"Occlusion range [{lo}, {hi}] not reached after {max_tries} tries",
        {"seed": seed, "prompt": prompt},
    )


def write_pair(out_dir: str | Path, name: str, pair: AmodalPair) -> dict[str, str]:
    """Write conditioning, target and occluder images; returns their relative paths"""

    out_dir = Path(out_dir)
    paths = {
        "conditioning": f"conditioning/{name}.png",
        "target": f"target/{name}.png",
        "occluder": f"occluder/{name}.png",
    }
    write_image(out_dir / paths["conditioning"], pair.conditioning)
    write_image(out_dir / paths["target"], pair.target)
    write_mask(out_dir / paths["occluder"], pair.occluder)
    return paths


def write_index(out_dir: str | Path, records: list[PairRecord]) -> Path:
    path = Path(out_dir) / "pairs.jsonl"
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.model_dump(), sort_keys=True) + "\n")
    return path


def read_index(out_dir: str | Path) -> list[PairRecord]:
    path = Path(out_dir) / "pairs.jsonl"
    with open(path, encoding="utf-8") as f:
        return [PairRecord.model_validate_json(line) for line in f if line.strip()]


def audit_pair_files(out_dir: str | Path, record: PairRecord) -> int:
    """
    Number of conditioning pixels that are neither the target pixel nor
    neutral on all channels, as stored on disk (neutral quantizes to 128).
    """

    out_dir = Path(out_dir)
    conditioning = read_image(out_dir / record.conditioning)
    target = read_image(out_dir / record.target)
    stored_neutral = np.floor(NEUTRAL * 255.0 + 0.5) / 255.0
    same = np.all(conditioning == target, axis=-1)
    neutral = np.all(conditioning == stored_neutral, axis=-1)
    return int(np.count_nonzero(~(same | neutral)))
