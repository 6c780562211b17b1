# Copyright (c) 2024 Sports Media Platform
# Licensed under the MIT License

"""Test suite for sports media platform."""

__version__ = "1.0.0"
