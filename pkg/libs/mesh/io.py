# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""
Mesh file I/O.

OBJ: ASCII ``v x y z [r g b]`` and ``f a b c`` records, ``g name`` groups,
coordinates written with 9 significant digits. Polygons are fan-triangulated
on read.
PLY: binary little-endian, float32 coordinates, optional uchar colors and
int32 triangle lists.
"""

import json
import logging
from pathlib import Path

import numpy as np

from libs.common.errors import MissingFileError, SchemaError
from libs.mesh.types import MeshGroup, TriangleMesh

logger = logging.getLogger(__name__)

SCENE_INDEX_VERSION = "1.0"


def write_obj(path: str | Path, mesh: TriangleMesh) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# scenekit mesh\n")
        if mesh.vertex_colors is not None:
            data = np.hstack([mesh.vertices, mesh.vertex_colors])
            np.savetxt(f, data, fmt="v %.9g %.9g %.9g %.9g %.9g %.9g")
        elif mesh.n_vertices:
            np.savetxt(f, mesh.vertices, fmt="v %.9g %.9g %.9g")

        if mesh.groups:
            for g in mesh.groups:
                f.write(f"g {g.name}\n")
                np.savetxt(f, mesh.faces[g.face_start:g.face_stop] + 1, fmt="f %d %d %d")
        elif mesh.n_faces:
            np.savetxt(f, mesh.faces + 1, fmt="f %d %d %d")


def read_obj(path: str | Path) -> TriangleMesh:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Mesh file not found: {path}")

    vertices: list[list[float]] = []
    colors: list[list[float]] = []
    faces: list[list[int]] = []
    group_starts: list[tuple[str, int]] = []

    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    vertices.append([float(x) for x in parts[1:4]])
                    if len(parts) >= 7:
                        colors.append([float(x) for x in parts[4:7]])
                elif tag == "f":
                    idx = []
                    for token in parts[1:]:
                        i = int(token.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(vertices) + i)
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
                elif tag == "g":
                    group_starts.append((" ".join(parts[1:]) or "default", len(faces)))
            except ValueError:
                raise SchemaError(f"Malformed OBJ record at {path.name}:{line_no}")

    if colors and len(colors) != len(vertices):
        raise SchemaError(f"{path.name} mixes colored and uncolored vertices")

    face_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    groups = []
    for i, (name, start) in enumerate(group_starts):
        stop = group_starts[i + 1][1] if i + 1 < len(group_starts) else len(faces)
        if stop == start:
            continue
        used = face_arr[start:stop]
        groups.append(MeshGroup(name, "other", int(used.min()), int(used.max()) + 1, start, stop))

    try:
        return TriangleMesh(np.array(vertices).reshape(-1, 3), face_arr,
                            np.array(colors) if colors else None, groups)
    except ValueError as e:
        raise SchemaError(f"Invalid mesh in {path.name}: {e}")


def write_ply(path: str | Path, mesh: TriangleMesh) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    has_colors = mesh.vertex_colors is not None
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {mesh.n_vertices}",
        "property float x",
        "property float y",
        "property float z",
    ]
    vertex_fields = [("xyz", "<f4", 3)]
    if has_colors:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
        vertex_fields.append(("rgb", "u1", 3))
    header += [
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]

    vertex_data = np.empty(mesh.n_vertices, dtype=vertex_fields)
    vertex_data["xyz"] = mesh.vertices
    if has_colors:
        vertex_data["rgb"] = np.floor(np.clip(mesh.vertex_colors, 0, 1) * 255 + 0.5)

    face_data = np.empty(mesh.n_faces, dtype=[("n", "u1"), ("idx", "<i4", 3)])
    face_data["n"] = 3
    face_data["idx"] = mesh.faces

    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(vertex_data.tobytes())
        f.write(face_data.tobytes())


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
}


def read_ply(path: str | Path) -> TriangleMesh:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Mesh file not found: {path}")

    data = path.read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise SchemaError(f"{path.name} is not a PLY file")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii").splitlines()

    if "format binary_little_endian 1.0" not in header:
        raise SchemaError(f"{path.name}: only binary little-endian PLY is supported")

    elements: list[tuple[str, int, list[tuple[str, ...]]]] = []
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property" and elements:
            elements[-1][2].append(tuple(parts[1:]))

    vertices = np.zeros((0, 3))
    colors = None
    faces = np.zeros((0, 3), dtype=np.int64)
    offset = body_start
    try:
        for name, count, props in elements:
            if name == "vertex":
                dtype = np.dtype([(p[-1], _PLY_TYPES[p[0]]) for p in props])
                block = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
                offset += dtype.itemsize * count
                vertices = np.stack([block["x"], block["y"], block["z"]], axis=1).astype(np.float64)
                if "red" in dtype.names:
                    rgb = np.stack([block["red"], block["green"], block["blue"]], axis=1)
                    colors = rgb.astype(np.float64) / 255.0
            elif name == "face":
                _, count_type, index_type, _ = props[0]
                count_dtype = np.dtype(_PLY_TYPES[count_type])
                index_dtype = np.dtype(_PLY_TYPES[index_type])
                tri = np.dtype([("n", count_dtype), ("idx", index_dtype, 3)])
                block = np.frombuffer(data, dtype=tri, count=count, offset=offset)
                if count and np.any(block["n"] != 3):
                    raise SchemaError(f"{path.name}: only triangle faces are supported")
                offset += tri.itemsize * count
                faces = block["idx"].astype(np.int64)
            else:
                raise SchemaError(f"{path.name}: unsupported PLY element '{name}'")
    except (KeyError, ValueError) as e:
        raise SchemaError(f"Malformed PLY {path.name}: {e}")

    return TriangleMesh(vertices, faces, colors)


def load_mesh(path: str | Path) -> TriangleMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        return read_ply(path)
    raise SchemaError(f"Unsupported mesh format '{suffix}'")


def save_mesh(path: str | Path, mesh: TriangleMesh) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        write_obj(path, mesh)
    elif suffix == ".ply":
        write_ply(path, mesh)
    else:
        raise SchemaError(f"Unsupported mesh format '{suffix}'")


def write_scene(out_dir: str | Path, mesh: TriangleMesh, name: str = "scene") -> tuple[Path, Path]:
    """Write the merged scene OBJ with one group per component and its JSON index"""

    out_dir = Path(out_dir)
    obj_path = out_dir / f"{name}.obj"
    index_path = out_dir / f"{name}_index.json"

    write_obj(obj_path, mesh)
    index = {
        "schema_version": SCENE_INDEX_VERSION,
        "mesh": obj_path.name,
        "vertices": mesh.n_vertices,
        "faces": mesh.n_faces,
        "components": [g.to_dict() for g in mesh.groups],
    }
    index_path.write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote {obj_path} with {len(mesh.groups)} components")
    return obj_path, index_path


def read_scene(obj_path: str | Path) -> TriangleMesh:
    """Load a scene OBJ and, when present, restore component kinds and ids from its index"""

    obj_path = Path(obj_path)
    mesh = read_obj(obj_path)
    index_path = obj_path.with_name(f"{obj_path.stem}_index.json")
    if index_path.exists():
        index = json.loads(index_path.read_text(encoding="utf-8"))
        mesh.groups = [MeshGroup.from_dict(c) for c in index.get("components", [])]
    return mesh
