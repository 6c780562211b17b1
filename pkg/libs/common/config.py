# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Configuration management using Pydantic settings."""

import json
import os
import zlib
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv
from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()


class CameraSettings(BaseSettings):
    """Virtual camera and reprojection settings"""

    model_config = SettingsConfigDict(
        env_prefix="SCENEKIT_CAMERA_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    crop_fov_deg: float = Field(default=49.1, gt=0.0, lt=180.0)
    crop_distance: float = Field(default=1.5, gt=0.0)
    crop_res: int = Field(default=512, ge=8, le=4096)

    # Splat footprint grows to 3x3 above this source-to-crop magnification
    splat_widen_magnification: float = Field(default=1.5, gt=0.0)


class RansacSettings(BaseSettings):
    """Scale alignment settings"""

    model_config = SettingsConfigDict(
        env_prefix="SCENEKIT_RANSAC_",
        env_file=".env",
        extra="ignore"
    )

    iters: int = Field(default=256, ge=1)
    tol: float = Field(default=0.05, gt=0.0)  # normalized units
    min_pairs: int = Field(default=20, ge=1)


class BackgroundSettings(BaseSettings):
    """Background SDF / color field training and extraction"""

    model_config = SettingsConfigDict(
        env_prefix="SCENEKIT_BACKGROUND_",
        env_file=".env",
        extra="ignore"
    )

    # Ray supervision
    rays_per_batch: int = Field(default=1024, ge=1)
    samples_per_ray: int = Field(default=16, ge=1)
    band: float = Field(default=0.1, gt=0.0, lt=1.0)

    # Network
    hidden_layers: int = Field(default=4, ge=1)
    hidden_units: int = Field(default=128, ge=1)

    # Adam
    iters: int = Field(default=3000, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    color_weight: float = Field(default=1.0, ge=0.0)
    log_every: int = Field(default=500, ge=1)

    # Extraction
    grid_res: int = Field(default=256, ge=2)
    depth_margin: float = Field(default=0.05, ge=0.0)


class EvaluationSettings(BaseSettings):
    """Evaluation protocol settings"""

    model_config = SettingsConfigDict(
        env_prefix="SCENEKIT_EVAL_",
        env_file=".env",
        extra="ignore"
    )

    preset: str = "front"
    seed: int = 0
    n_points: int | None = None
    tau: float | None = None
    component_points: int = Field(default=20000, ge=1)
    batch_size: int = Field(default=65536, ge=1)

    @field_validator("preset")
    @classmethod
    def validate_preset(cls, v: str) -> str:
        if v not in ("front", "hope", "custom"):
            raise ValueError("Preset must be front, hope, or custom")
        return v


class SynthSettings(BaseSettings):
    """Synthetic world generation settings"""

    model_config = SettingsConfigDict(
        env_prefix="SCENEKIT_SYNTH_",
        env_file=".env",
        extra="ignore"
    )

    width: int = Field(default=320, ge=8)
    height: int = Field(default=240, ge=8)
    fov_deg: float = Field(default=60.0, gt=0.0, lt=180.0)
    sphere_tessellation: int = Field(default=48, ge=8)
    plane_tessellation: int = Field(default=64, ge=1)
    max_attempts: int = Field(default=1000, ge=1)

    # Amodal composition
    occlusion_min: float = Field(default=0.1, ge=0.0, le=1.0)
    occlusion_max: float = Field(default=0.5, ge=0.0, le=1.0)
    max_composition_tries: int = Field(default=100, ge=1)

    # Oracle reconstruction perturbation
    perturb_scale_min: float = Field(default=0.2, gt=0.0)
    perturb_scale_max: float = Field(default=5.0, gt=0.0)
    perturb_noise: float = Field(default=0.01, ge=0.0)


class MonitoringSettings(BaseSettings):
    """Logging configuration"""

    model_config = SettingsConfigDict(
        env_prefix="SCENEKIT_LOG_",
        env_file=".env",
        extra="ignore"
    )

    level: str = "INFO"
    format: str = "text"  # json or text
    file: str | None = None

    @field_validator("format")
    @classmethod
    def validate_format(cls, v: str) -> str:
        if v not in ("json", "text"):
            raise ValueError("Log format must be json or text")
        return v


class Settings(BaseSettings):
    """Main application settings"""

    model_config = SettingsConfigDict(
        env_prefix="SCENEKIT_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Environment
    environment: str = "development"

    # Execution
    seed: int = 0  # SCENEKIT_SEED
    jobs: int | None = Field(default=None, ge=1)

    # Component settings
    camera: CameraSettings = Field(default_factory=CameraSettings)
    ransac: RansacSettings = Field(default_factory=RansacSettings)
    background: BackgroundSettings = Field(default_factory=BackgroundSettings)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    synth: SynthSettings = Field(default_factory=SynthSettings)
    monitoring: MonitoringSettings = Field(default_factory=MonitoringSettings)

    @field_validator("environment")
    @classmethod
    def validate_environment(cls, v: str) -> str:
        if v not in ["development", "testing", "production"]:
            raise ValueError("Environment must be development, testing, or production")
        return v

    @model_validator(mode="after")
    def validate_occlusion_range(self) -> "Settings":
        if self.synth.occlusion_min > self.synth.occlusion_max:
            raise ValueError("synth.occlusion_min must not exceed synth.occlusion_max")
        if self.synth.perturb_scale_min > self.synth.perturb_scale_max:
            raise ValueError("synth.perturb_scale_min must not exceed synth.perturb_scale_max")
        return self

    @property
    def effective_jobs(self) -> int:
        return self.jobs or os.cpu_count() or 1

    @classmethod
    def from_file(cls, path: str | Path | None = None,
                  overrides: dict[str, Any] | None = None) -> "Settings":
        """Build settings with precedence: overrides > config file > environment > defaults"""

        data: dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            text = path.read_text(encoding="utf-8")
            if path.suffix.lower() in (".yaml", ".yml"):
                data = yaml.safe_load(text) or {}
            else:
                data = json.loads(text)
            if not isinstance(data, dict):
                raise ValueError(f"Config file {path} must contain an object")

        if overrides:
            data = _deep_merge(data, overrides)

        # Nested sections start from their environment-aware defaults
        for name, field in cls.model_fields.items():
            section = data.get(name)
            if isinstance(section, dict) and field.default_factory is not None:
                base = field.default_factory().model_dump()
                data[name] = _deep_merge(base, section)

        return cls(**data)


def _deep_merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


# Global settings instance (lazy loaded)
_settings: Settings | None = None


def get_settings() -> Settings:
    """Get application settings"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def derive_seed(base_seed: int, name: str) -> int:
    """Stable per-component seed derived from a base seed and a component name"""

    return (int(base_seed) * 1_000_003 + zlib.crc32(name.encode("utf-8"))) % (2 ** 32)
