# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Exception hierarchy shared by every SceneKit package."""

from typing import Any


class SceneKitError(Exception):
    """Base error with a stable machine-readable code and structured details"""

    code = "scenekit_error"

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


class DomainError(SceneKitError, ValueError):
    """Numeric argument outside its valid domain"""

    code = "domain_error"


class DimensionError(SceneKitError, ValueError):
    """Arrays whose resolutions or shapes do not agree"""

    code = "dimension_error"


class DegenerateInstanceError(SceneKitError):
    """Too few points, or zero spatial extent, to build a virtual camera"""

    code = "degenerate_instance"


class IngestError(SceneKitError):
    """Manifest could not be ingested; field_path points at the offending entry"""

    code = "ingest_error"

    def __init__(self, message: str, field_path: str = "", details: dict[str, Any] | None = None):
        super().__init__(message, details)
        self.field_path = field_path
        self.details.setdefault("field_path", field_path)


class MissingFileError(IngestError):
    code = "missing_file"


class SchemaError(IngestError):
    code = "schema_error"


class ResolutionMismatchError(IngestError):
    code = "resolution_mismatch"

    def __init__(self, message: str, field_path: str = "", instance: str | None = None,
                 details: dict[str, Any] | None = None):
        super().__init__(message, field_path, details)
        self.instance = instance
        self.details["instance"] = instance


class MaskOverlapError(IngestError):
    code = "mask_overlap"

    def __init__(self, message: str, pixel_count: int, field_path: str = "instances",
                 details: dict[str, Any] | None = None):
        super().__init__(message, field_path, details)
        self.pixel_count = pixel_count
        self.details["pixel_count"] = pixel_count


class RankDeficiencyError(SceneKitError):
    """Least-squares system without a unique solution"""

    code = "rank_deficiency"


class CompletionError(SceneKitError):
    """Completion hook failed or produced unusable output"""

    code = "completion_error"

    def __init__(self, message: str, returncode: int | None = None, stdout: str = "",
                 stderr: str = "", details: dict[str, Any] | None = None):
        super().__init__(message, details)
        self.returncode = returncode
        self.stdout = stdout
        self.stderr = stderr
        self.details.update({"returncode": returncode, "stderr": stderr[-2000:]})


class ReconstructionError(SceneKitError):
    """Reconstruction hook failed or produced an invalid mesh"""

    code = "reconstruction_error"


class CorrespondenceFallback(SceneKitError):
    """Too few depth correspondences for RANSAC; caller falls back to a bounding-box ratio"""

    code = "correspondence_fallback"

    def __init__(self, message: str, pair_count: int, details: dict[str, Any] | None = None):
        super().__init__(message, details)
        self.pair_count = pair_count
        self.details["pair_count"] = pair_count


class NoBackgroundError(SceneKitError):
    """No stuff pixel carries valid depth"""

    code = "no_background"


class DivergenceError(SceneKitError):
    """Training loss became non-finite"""

    code = "divergence"

    def __init__(self, message: str, iteration: int, details: dict[str, Any] | None = None):
        super().__init__(message, details)
        self.iteration = iteration
        self.details["iteration"] = iteration


class DegenerateMeshError(SceneKitError):
    """Mesh without usable surface area"""

    code = "degenerate_mesh"


class GenerationError(SceneKitError):
    """Synthetic scene placement failed"""

    code = "generation_error"


class CompositionError(SceneKitError):
    """Amodal pair could not reach the requested occlusion range"""

    code = "composition_error"
