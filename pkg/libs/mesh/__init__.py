# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Triangle meshes, isosurface extraction, surface sampling and mesh file I/O."""

__version__ = "1.0.0"
