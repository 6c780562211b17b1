# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License
