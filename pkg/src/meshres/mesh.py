"""Triangle meshes with per-face class labels.

A mesh is a pair of arrays: ``vertices`` (V, 3) float64 and ``faces``
(F, 3) int64. Labels are one class id per face, 0 for gingiva (BG) and
1..7 for the tooth classes T1 (2nd molar) .. T7 (central incisor).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateFaceError,
    EmptyResultError,
    IsolatedVertexError,
    ThirdMolarError,
    UnknownLabelError,
    ValidationError,
)

NUM_CLASSES = 8
CLASS_NAMES = ("BG", "T1", "T2", "T3", "T4", "T5", "T6", "T7")

# Cross-product norm (mm^2) below which a face counts as degenerate.
DEGENERATE_EPS = 1e-12

# Lower-jaw FDI codes. Left/right quadrants merge into one class.
FDI_TO_CLASS = {0: 0}
for _quadrant in (30, 40):
    for _tooth, _cls in zip(range(1, 8), range(7, 0, -1)):
        FDI_TO_CLASS[_quadrant + _tooth] = _cls
THIRD_MOLARS = frozenset({38, 48})


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.faces.copy())

    def validate(self) -> "TriangleMesh":
        validate_mesh(self)
        return self

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))


@dataclass
class LabeledMesh:
    mesh: TriangleMesh
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64).reshape(-1)

    def validate(self) -> "LabeledMesh":
        validate_mesh(self.mesh)
        if len(self.labels) != self.mesh.n_faces:
            raise ValidationError(
                f"{len(self.labels)} labels for {self.mesh.n_faces} faces")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= NUM_CLASSES):
            raise ValidationError("labels must lie in [0, 7]")
        return self

    def copy(self) -> "LabeledMesh":
        return LabeledMesh(self.mesh.copy(), self.labels.copy())


def validate_mesh(mesh: TriangleMesh) -> None:
    f = mesh.faces
    if len(f) < 1:
        raise ValidationError("mesh has no faces")
    if not np.all(np.isfinite(mesh.vertices)):
        raise ValidationError("non-finite vertex coordinate")
    if f.min() < 0 or f.max() >= mesh.n_vertices:
        raise ValidationError(
            f"face index out of range [0, {mesh.n_vertices})")
    if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
        raise ValidationError("face repeats a vertex index")


def _face_cross(mesh: TriangleMesh) -> np.ndarray:
    v = mesh.vertices[mesh.faces]
    return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])


def face_normal(mesh: TriangleMesh, face_index: int) -> np.ndarray:
    """Unit normal of one face, right-handed w.r.t. its winding."""
    a, b, c = mesh.vertices[mesh.faces[face_index]]
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n)
    if norm <= DEGENERATE_EPS:
        raise DegenerateFaceError(f"face {face_index} is degenerate")
    return n / norm


def face_normals(mesh: TriangleMesh) -> np.ndarray:
    cross = _face_cross(mesh)
    norm = np.linalg.norm(cross, axis=1)
    bad = np.flatnonzero(norm <= DEGENERATE_EPS)
    if len(bad):
        raise DegenerateFaceError(f"face {bad[0]} is degenerate")
    return cross / norm[:, None]


def face_areas(mesh: TriangleMesh) -> np.ndarray:
    return 0.5 * np.linalg.norm(_face_cross(mesh), axis=1)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, renormalized.

    The raw cross product already carries twice the face area, so it is
    summed directly.
    """
    cross = _face_cross(mesh)
    acc = np.zeros_like(mesh.vertices)
    for corner in range(3):
        np.add.at(acc, mesh.faces[:, corner], cross)
    counts = np.bincount(mesh.faces.ravel(), minlength=mesh.n_vertices)
    isolated = np.flatnonzero(counts == 0)
    if len(isolated):
        raise IsolatedVertexError(f"vertex {isolated[0]} has no incident face")
    norm = np.linalg.norm(acc, axis=1)
    if np.any(norm <= DEGENERATE_EPS):
        raise DegenerateFaceError(
            f"vertex {int(np.argmin(norm))} has a vanishing normal")
    return acc / norm[:, None]


def barycenters(mesh: TriangleMesh) -> np.ndarray:
    v = mesh.vertices[mesh.faces]
    return (v[:, 0] + v[:, 1] + v[:, 2]) / 3.0


def submesh(labeled: LabeledMesh, keep: np.ndarray) -> LabeledMesh:
    """Faces selected by boolean mask ``keep``; unused vertices dropped."""
    faces = labeled.mesh.faces[keep]
    used = np.unique(faces)
    remap = np.full(labeled.mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return LabeledMesh(
        TriangleMesh(labeled.mesh.vertices[used], remap[faces]),
        labeled.labels[keep],
    )


def crop_base(labeled: LabeledMesh, keep_fraction: float) -> LabeledMesh:
    """Keep the top ``keep_fraction`` of the height range.

    Height runs along the coordinate axis with the smallest bounding-box
    extent of the face barycenters (the occlusal direction of a jaw scan
    lying flat); larger coordinates count as "up".
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    if keep_fraction == 1.0:
        return labeled.copy()
    bary = barycenters(labeled.mesh)
    extent = bary.max(0) - bary.min(0)
    axis = int(np.argmin(extent))
    h = bary[:, axis]
    lo, hi = h.min(), h.max()
    threshold = hi - keep_fraction * (hi - lo)
    keep = h >= threshold
    if not keep.any():
        raise EmptyResultError("crop retained no faces")
    return submesh(labeled, keep)


def map_fdi_labels(per_vertex_fdi, mesh: TriangleMesh) -> LabeledMesh:
    """Convert per-vertex FDI codes into per-face class ids.

    Each face takes the majority class of its three vertices; with three
    distinct classes the first listed vertex wins.
    """
    fdi = np.asarray(per_vertex_fdi, dtype=np.int64).reshape(-1)
    if len(fdi) != mesh.n_vertices:
        raise ValidationError(
            f"{len(fdi)} vertex labels for {mesh.n_vertices} vertices")
    codes = set(np.unique(fdi).tolist())
    if codes & THIRD_MOLARS:
        raise ThirdMolarError("scan contains a third molar (FDI 38/48)")
    unknown = codes - set(FDI_TO_CLASS)
    if unknown:
        raise UnknownLabelError(f"unknown FDI codes {sorted(unknown)}")
    lut = np.zeros(max(FDI_TO_CLASS) + 1, dtype=np.int64)
    for code, cls in FDI_TO_CLASS.items():
        lut[code] = cls
    cls = lut[fdi][mesh.faces]
    a, b, c = cls[:, 0], cls[:, 1], cls[:, 2]
    # a wins unless b == c outvotes it
    labels = np.where((b == c) & (a != b), b, a)
    return LabeledMesh(mesh, labels)


def icosphere(subdivisions: int = 4, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron with 20 * 4**subdivisions outward-wound faces."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.array(verts) * radius, np.array(faces))
