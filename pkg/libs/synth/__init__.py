# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Synthetic primitive scenes, ground-truth rendering and amodal pair composition."""

__version__ = "1.0.0"
