# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Scene data model, manifest ingestion and depth alignment."""

__version__ = "1.0.0"
