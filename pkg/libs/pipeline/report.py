# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Machine-readable run reports shared by every command."""

from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from libs.common.config import Settings
from libs.metrics.scores import CHAMFER_CONVENTION

REPORT_SCHEMA_VERSION = "1.0"

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2


class RunReport(BaseModel):
    """Reports are the only artifacts that carry timestamps and timings"""

    schema_version: str = REPORT_SCHEMA_VERSION
    command: str
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    exit_code: int = EXIT_OK
    settings: dict[str, Any] = Field(default_factory=dict)
    seeds: dict[str, int] = Field(default_factory=dict)
    chamfer_convention: str = CHAMFER_CONVENTION
    timings: dict[str, float] = Field(default_factory=dict)
    results: dict[str, Any] = Field(default_factory=dict)
    errors: list[dict[str, Any]] = Field(default_factory=list)

    @classmethod
    def start(cls, command: str, settings: Settings, **seeds: int) -> "RunReport":
        return cls(
            command=command,
            settings=settings.model_dump(mode="json"),
            seeds={"seed": settings.seed, **seeds},
        )

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path
