# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Common utilities shared by every SceneKit package: settings, logging, errors."""

__version__ = "0.1.0"

from .config import Settings, derive_seed, get_settings
from .errors import SceneKitError

__all__ = [
    "SceneKitError",
    "Settings",
    "__version__",
    "derive_seed",
    "get_settings",
]
