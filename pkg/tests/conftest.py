"""Pytest configuration and shared fixtures.

Provides small settings, analytic meshes and a synthetic scene bundle for all
test modules.
"""

from pathlib import Path

import numpy as np
import pytest

from libs.common.config import (
    BackgroundSettings,
    CameraSettings,
    EvaluationSettings,
    RansacSettings,
    Settings,
    SynthSettings,
)
from libs.geometry.camera import CameraIntrinsics, fov_to_intrinsics
from libs.mesh.types import TriangleMesh
from libs.synth.bundle import synthesize
from libs.synth.tessellate import box, uv_sphere


@pytest.fixture
def test_settings() -> Settings:
    """Settings sized for fast tests."""
    return Settings(
        environment="testing",
        seed=0,
        jobs=1,
        camera=CameraSettings(crop_res=96),
        ransac=RansacSettings(iters=128),
        background=BackgroundSettings(
            iters=150,
            hidden_layers=2,
            hidden_units=32,
            rays_per_batch=256,
            samples_per_ray=8,
            grid_res=24,
            log_every=1000,
        ),
        evaluation=EvaluationSettings(n_points=5000, component_points=2000),
        synth=SynthSettings(width=128, height=96),
    )


@pytest.fixture
def small_intrinsics() -> CameraIntrinsics:
    """64x48 camera with a 60 degree field of view."""
    return fov_to_intrinsics(60.0, 64, 48)


@pytest.fixture
def unit_sphere() -> TriangleMesh:
    """Unit sphere at the origin."""
    return uv_sphere(1.0, 32)


@pytest.fixture
def unit_cube() -> TriangleMesh:
    """Axis-aligned cube with half extent 0.5."""
    return box((0.5, 0.5, 0.5))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def synthetic_bundle(tmp_path, test_settings) -> Path:
    """Manifest path of a seeded two-object synthetic scene."""
    return synthesize(
        tmp_path / "bundle",
        seed=0,
        things=2,
        synth=test_settings.synth,
        camera=test_settings.camera,
    )
