# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Pinhole camera geometry and the per-instance virtual camera."""

__version__ = "1.0.0"
