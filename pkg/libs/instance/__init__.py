# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Per-instance reprojection, completion, reconstruction and scale alignment."""

__version__ = "1.0.0"
