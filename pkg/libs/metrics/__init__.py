# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Point-set reconstruction metrics and the evaluation protocol."""

__version__ = "1.0.0"
