# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Background signed distance and color fields."""

__version__ = "1.0.0"
