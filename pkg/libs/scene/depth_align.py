# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Affine-invariant depth to metric depth alignment."""

import logging

import numpy as np
from pydantic import BaseModel

from libs.common.errors import DimensionError, RankDeficiencyError
from libs.scene.types import DepthMap

logger = logging.getLogger(__name__)


class ScaleShiftFit(BaseModel):
    """Least-squares fit of anchor ~ s * affine + t"""

    s: float
    t: float
    residual_rms: float
    pixel_count: int
    warning: str | None = None

    def apply(self, depth: DepthMap) -> DepthMap:
        return depth.scaled(self.s, self.t)


def fit_scale_shift(affine_depth: DepthMap, anchor_depth: DepthMap) -> ScaleShiftFit:
    """Closed-form least squares over pixels valid in both maps"""

    if affine_depth.shape != anchor_depth.shape:
        raise DimensionError("Affine and anchor depth maps differ in resolution")

    # Finite affine value and valid anchor depth
    joint = np.isfinite(affine_depth.values) & anchor_depth.validity
    a = affine_depth.values[joint]
    m = anchor_depth.values[joint]
    n = int(a.size)

    if n < 2:
        raise RankDeficiencyError(f"Need at least 2 jointly valid pixels, got {n}", {"pixel_count": n})
    if np.all(a == a[0]):
        raise RankDeficiencyError("All affine depth values are equal", {"pixel_count": n})

    # Centered normal equations
    a_mean = a.mean()
    m_mean = m.mean()
    da = a - a_mean
    s = float(np.dot(da, m - m_mean) / np.dot(da, da))
    t = float(m_mean - s * a_mean)

    residual = s * a + t - m
    rms = float(np.sqrt(np.mean(residual * residual)))

    warning = None
    if s <= 0:
        warning = f"Non-positive depth scale s={s:.6g}"
        logger.warning(f"fit_scale_shift: {warning} over {n} pixels")

    logger.info(f"Fitted depth scale/shift s={s:.6g} t={t:.6g} rms={rms:.3g} ({n} pixels)")
    return ScaleShiftFit(s=s, t=t, residual_rms=rms, pixel_count=n, warning=warning)
