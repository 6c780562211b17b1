# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""End-to-end scene reconstruction orchestration and run reports."""

__version__ = "1.0.0"
