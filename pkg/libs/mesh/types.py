# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Point cloud and triangle mesh containers.
Both are thin wrappers over float64 / int64 numpy arrays that enforce the
finiteness and index-range invariants at construction time.
"""

from typing import Any

import numpy as np

from libs.common.errors import DimensionError, DomainError


class PointCloud:
    """3D points with optional per-point colors and source-pixel indices"""

    def __init__(self, points: np.ndarray, colors: np.ndarray | None = None,
                 pixels: np.ndarray | None = None, labels: np.ndarray | None = None):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise DomainError("Point cloud contains non-finite coordinates")

        if colors is not None:
            colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
            if len(colors) != len(points):
                raise DimensionError("Color count does not match point count")
        if pixels is not None:
            # (row, col) of the source pixel for every point
            pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
            if len(pixels) != len(points):
                raise DimensionError("Pixel index count does not match point count")
        if labels is not None:
            labels = np.asarray(labels).reshape(-1)
            if len(labels) != len(points):
                raise DimensionError("Label count does not match point count")

        self.points = points
        self.colors = colors
        self.pixels = pixels
        self.labels = labels

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self):
        return f"PointCloud(n={len(self)})"

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0

    def subset(self, index: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.points[index],
            None if self.colors is None else self.colors[index],
            None if self.pixels is None else self.pixels[index],
            None if self.labels is None else self.labels[index],
        )

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_empty:
            raise DomainError("Empty point cloud has no bounds")
        return self.points.min(axis=0), self.points.max(axis=0)


class MeshGroup:
    """Named, contiguous vertex/face range inside a merged mesh"""

    def __init__(self, name: str, kind: str, vertex_start: int, vertex_stop: int,
                 face_start: int, face_stop: int, source_id: str | None = None):
        self.name = name
        self.kind = kind  # thing | background | other
        self.vertex_start = vertex_start
        self.vertex_stop = vertex_stop
        self.face_start = face_start
        self.face_stop = face_stop
        self.source_id = source_id

    def __repr__(self):
        return f"MeshGroup(name='{self.name}', kind='{self.kind}')"

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "vertex_range": [self.vertex_start, self.vertex_stop],
            "face_range": [self.face_start, self.face_stop],
            "source_id": self.source_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MeshGroup":
        return cls(
            name=data["name"],
            kind=data.get("kind", "other"),
            vertex_start=int(data["vertex_range"][0]),
            vertex_stop=int(data["vertex_range"][1]),
            face_start=int(data["face_range"][0]),
            face_stop=int(data["face_range"][1]),
            source_id=data.get("source_id"),
        )


class TriangleMesh:
    """Indexed triangle mesh with optional vertex colors and provenance groups"""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray,
                 vertex_colors: np.ndarray | None = None,
                 groups: list[MeshGroup] | None = None, validate: bool = True):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        self.vertex_colors = (
            None if vertex_colors is None
            else np.asarray(vertex_colors, dtype=np.float64).reshape(-1, 3)
        )
        self.groups = list(groups or [])

        if validate:
            self.validate()

    def __repr__(self):
        return f"TriangleMesh(vertices={self.n_vertices}, faces={self.n_faces})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def is_empty(self) -> bool:
        return self.n_faces == 0

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def validate(self) -> None:
        """Check index range, repeated indices and finiteness"""

        if not np.all(np.isfinite(self.vertices)):
            raise DomainError("Mesh contains non-finite vertex coordinates")
        if self.n_faces:
            if self.faces.min() < 0 or self.faces.max() >= self.n_vertices:
                raise DimensionError("Face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise DomainError("Face with repeated vertex indices")
        if self.vertex_colors is not None and len(self.vertex_colors) != self.n_vertices:
            raise DimensionError("Vertex color count does not match vertex count")

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.vertex_colors is None else self.vertex_colors.copy(),
            [MeshGroup(**vars(g)) for g in self.groups],
            validate=False,
        )

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same topology, colors and groups with new vertex positions"""
        return TriangleMesh(vertices, self.faces, self.vertex_colors, self.groups)

    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of face corner positions"""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        tri = self.triangles()
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def face_normals(self) -> np.ndarray:
        """Unnormalized (p1 - p0) x (p2 - p0) per face"""
        tri = self.triangles()
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise DomainError("Empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (a, b) pairs"""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_face_counts(self) -> np.ndarray:
        """Number of faces incident on each unique edge"""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return counts

    def euler_characteristic(self) -> int:
        used = np.unique(self.faces)
        return int(len(used) - len(self.edges()) + self.n_faces)

    def subdivided(self) -> "TriangleMesh":
        """Split every face into four at its edge midpoints; shared edges get one midpoint"""

        if self.is_empty:
            return self.copy()
        f = self.faces
        halves = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        halves.sort(axis=1)
        edges, inverse = np.unique(halves, axis=0, return_inverse=True)
        mid = self.n_vertices + inverse.reshape(3, -1)
        m01, m12, m20 = mid[0], mid[1], mid[2]

        vertices = np.concatenate([self.vertices, self.vertices[edges].mean(axis=1)])
        colors = None
        if self.vertex_colors is not None:
            colors = np.concatenate([self.vertex_colors, self.vertex_colors[edges].mean(axis=1)])
        faces = np.concatenate([
            np.stack([f[:, 0], m01, m20], axis=1),
            np.stack([f[:, 1], m12, m01], axis=1),
            np.stack([f[:, 2], m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ])
        return TriangleMesh(vertices, faces, colors, validate=False)

    def submesh(self, face_mask: np.ndarray) -> "TriangleMesh":
        """Keep the selected faces and drop vertices no face references"""

        faces = self.faces[np.asarray(face_mask, dtype=bool)]
        used, inverse = np.unique(faces, return_inverse=True)
        colors = None if self.vertex_colors is None else self.vertex_colors[used]
        return TriangleMesh(self.vertices[used], inverse.reshape(-1, 3), colors)


class ScalarGrid:
    """
    Scalar field sampled on a regular lattice spanning an axis-aligned box.
    values[i, j, k] is the sample at lo + (i, j, k) * spacing; the optional
    mask flags lattice points that carry real samples rather than fill values.
    """

    def __init__(self, values: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                 mask: np.ndarray | None = None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 2:
            raise DimensionError(f"Grid needs at least 2 samples per axis, got {values.shape}")
        lo = np.asarray(lo, dtype=np.float64).reshape(3)
        hi = np.asarray(hi, dtype=np.float64).reshape(3)
        if not np.all(hi > lo):
            raise DomainError("Grid bounds are degenerate")
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != values.shape:
                raise DimensionError("Grid mask shape does not match values")

        self.values = values
        self.lo = lo
        self.hi = hi
        self.mask = mask

    def __repr__(self):
        return f"ScalarGrid(dims={self.dims})"

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.array(self.dims) - 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(self.lo[a], self.hi[a], self.dims[a]) for a in range(3)]


def merge_scene(meshes: list[TriangleMesh], names: list[str] | None = None,
                kinds: list[str] | None = None, source_ids: list[str | None] | None = None) -> TriangleMesh:
    """Concatenate meshes with index offsetting, recording one provenance group per input"""

    if not meshes:
        return TriangleMesh.empty()

    names = names or [f"component_{i}" for i in range(len(meshes))]
    kinds = kinds or ["other"] * len(meshes)
    source_ids = source_ids or [None] * len(meshes)

    with_colors = any(m.vertex_colors is not None for m in meshes)
    vertices, faces, colors, groups = [], [], [], []
    v_offset = f_offset = 0
    for mesh, name, kind, source_id in zip(meshes, names, kinds, source_ids):
        vertices.append(mesh.vertices)
        faces.append(mesh.faces + v_offset)
        if with_colors:
            colors.append(mesh.vertex_colors if mesh.vertex_colors is not None
                          else np.full((mesh.n_vertices, 3), 0.5))
        groups.append(MeshGroup(name, kind, v_offset, v_offset + mesh.n_vertices,
                                f_offset, f_offset + mesh.n_faces, source_id))
        v_offset += mesh.n_vertices
        f_offset += mesh.n_faces

    return TriangleMesh(
        np.concatenate(vertices),
        np.concatenate(faces),
        np.concatenate(colors) if with_colors else None,
        groups,
    )


def split_by_provenance(mesh: TriangleMesh) -> dict[str, TriangleMesh]:
    """Inverse of merge_scene: one mesh per group, in group order"""

    parts = {}
    for g in mesh.groups:
        faces = mesh.faces[g.face_start:g.face_stop] - g.vertex_start
        colors = None if mesh.vertex_colors is None else mesh.vertex_colors[g.vertex_start:g.vertex_stop]
        parts[g.name] = TriangleMesh(mesh.vertices[g.vertex_start:g.vertex_stop], faces, colors)
    return parts
