"""Mesh readers/writers (OBJ, PLY, STL) and JSON label sidecars."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .mesh import LabeledMesh, TriangleMesh, map_fdi_labels, validate_mesh

MESH_SUFFIXES = (".obj", ".ply", ".stl")


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    readers = {"obj": _read_obj, "ply": _read_ply, "stl": _read_stl}
    if fmt not in readers:
        raise ParseError(f"unsupported mesh format {fmt!r}")
    data = path.read_bytes()
    try:
        mesh = readers[fmt](data)
    except (ValueError, IndexError, struct.error, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    validate_mesh(mesh)
    return mesh


def save_mesh(mesh: TriangleMesh, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        path.write_text(_format_obj(mesh))
    elif fmt == "ply":
        path.write_bytes(_format_ply(mesh, binary=True))
    elif fmt == "stl":
        path.write_bytes(_format_stl(mesh))
    else:
        raise ValueError(f"unsupported mesh format {fmt!r}")


def _read_obj(data: bytes) -> TriangleMesh:
    verts, faces = [], []
    for lineno, raw in enumerate(data.decode("utf-8").splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: only triangular faces are supported")
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                # negative indices are relative to the vertices read so far
                idx.append(i - 1 if i > 0 else len(verts) + i)
            faces.append(idx)
    if not verts or not faces:
        raise ParseError("OBJ has no vertices or faces")
    return TriangleMesh(np.array(verts), np.array(faces))


def _format_obj(mesh: TriangleMesh) -> str:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    return "\n".join(lines) + "\n"


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _read_ply(data: bytes) -> TriangleMesh:
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("missing PLY header")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii").splitlines()
    fmt = None
    elements: list[list] = []  # [name, count, [(prop, type, list_types)]]
    for line in header[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if tok[1] == "list":
                elements[-1][2].append((tok[4], None, (_PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            else:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]], None))
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"unsupported PLY format {fmt!r}")

    verts = faces = None
    if fmt == "ascii":
        tokens = data[body_start:].decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for pname, ptype, ltypes in props:
                    if ltypes is None:
                        row[pname] = float(tokens[pos])
                        pos += 1
                    else:
                        n = int(tokens[pos])
                        row[pname] = [int(t) for t in tokens[pos + 1:pos + 1 + n]]
                        pos += 1 + n
                rows.append(row)
            if name == "vertex":
                verts = np.array([[r["x"], r["y"], r["z"]] for r in rows])
            elif name == "face":
                faces = _ply_face_rows([r[props[0][0]] for r in rows])
    else:
        pos = body_start
        for name, count, props in elements:
            if all(ltypes is None for _, _, ltypes in props):
                dtype = np.dtype([(p, "<" + t) for p, t, _ in props])
                arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
                pos += dtype.itemsize * count
                if name == "vertex":
                    verts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
                continue
            rows = []
            for _ in range(count):
                row = {}
                for pname, ptype, ltypes in props:
                    if ltypes is None:
                        dt = np.dtype("<" + ptype)
                        row[pname] = np.frombuffer(data, dt, 1, pos)[0]
                        pos += dt.itemsize
                    else:
                        ct, it = np.dtype("<" + ltypes[0]), np.dtype("<" + ltypes[1])
                        n = int(np.frombuffer(data, ct, 1, pos)[0])
                        pos += ct.itemsize
                        row[pname] = np.frombuffer(data, it, n, pos).tolist()
                        pos += it.itemsize * n
                rows.append(row)
            if name == "face":
                faces = _ply_face_rows([r[props[0][0]] for r in rows])
    if verts is None or faces is None:
        raise ParseError("PLY lacks vertex or face element")
    return TriangleMesh(verts, faces)


def _ply_face_rows(rows) -> np.ndarray:
    if any(len(r) != 3 for r in rows):
        raise ParseError("only triangular faces are supported")
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def _format_ply(mesh: TriangleMesh, binary: bool = True) -> bytes:
    head = (
        "ply\nformat {} 1.0\nelement vertex {}\nproperty double x\n"
        "property double y\nproperty double z\nelement face {}\n"
        "property list uchar int vertex_indices\nend_header\n"
    ).format("binary_little_endian" if binary else "ascii",
             mesh.n_vertices, mesh.n_faces).encode("ascii")
    if not binary:
        body = "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in mesh.vertices.tolist())
        body += "".join(f"3 {a} {b} {c}\n" for a, b, c in mesh.faces.tolist())
        return head + body.encode("ascii")
    fdt = np.dtype([("n", "u1"), ("idx", "<i4", 3)])
    frec = np.empty(mesh.n_faces, dtype=fdt)
    frec["n"] = 3
    frec["idx"] = mesh.faces
    return head + mesh.vertices.astype("<f8").tobytes() + frec.tobytes()


_STL_DTYPE = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def _read_stl(data: bytes) -> TriangleMesh:
    if len(data) < 84:
        raise ParseError("STL too short")
    (count,) = struct.unpack("<I", data[80:84])
    if len(data) < 84 + 50 * count:
        raise ParseError("truncated binary STL")
    rec = np.frombuffer(data, _STL_DTYPE, count, 84)
    corners = rec["v"].reshape(-1, 3).astype(np.float64)
    # STL repeats shared corners; weld exact duplicates in first-seen order
    uniq, first, inverse = np.unique(corners, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return TriangleMesh(uniq[order], rank[inverse.reshape(-1)].reshape(-1, 3))


def _format_stl(mesh: TriangleMesh) -> bytes:
    rec = np.zeros(mesh.n_faces, dtype=_STL_DTYPE)
    v = mesh.vertices[mesh.faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    rec["normal"] = n / np.where(norm > 0, norm, 1.0)
    rec["v"] = v
    return b"\0" * 80 + struct.pack("<I", mesh.n_faces) + rec.tobytes()


def load_labels(path) -> dict:
    """Read a label sidecar: ``{"mode": "face"|"vertex_fdi", "labels": [...]}``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or "labels" not in doc:
        raise ParseError(f"{path}: missing 'labels' field")
    doc.setdefault("mode", "face")
    if doc["mode"] not in ("face", "vertex_fdi"):
        raise ParseError(f"{path}: unknown mode {doc['mode']!r}")
    return doc


def save_labels(path, labels, mode: str = "face", **extra) -> None:
    doc = {"mode": mode, "labels": [int(x) for x in np.asarray(labels).ravel()]}
    doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_labeled(mesh_path, labels_path) -> LabeledMesh:
    mesh = load_mesh(mesh_path)
    doc = load_labels(labels_path)
    if doc["mode"] == "vertex_fdi":
        return map_fdi_labels(doc["labels"], mesh)
    labels = np.asarray(doc["labels"], dtype=np.int64)
    if len(labels) != mesh.n_faces:
        raise ValidationError(
            f"{labels_path}: {len(labels)} labels for {mesh.n_faces} faces")
    return LabeledMesh(mesh, labels).validate()


def save_labeled(labeled: LabeledMesh, mesh_path, labels_path) -> None:
    save_mesh(labeled.mesh, mesh_path)
    save_labels(labels_path, labeled.labels)
