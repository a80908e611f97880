"""24-d per-cell feature rows and the binary ``.mrft`` feature file."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ShapeError
from .mesh import LabeledMesh, barycenters, face_normals, vertex_normals

FEATURE_DIMS = 24
COORD_COLS = slice(0, 12)
NORMAL_COLS = slice(12, 24)
BARY_COLS = slice(9, 12)

MRFT_MAGIC = b"MRFT"
MRFT_VERSION = 1
_MRFT_HEADER = struct.Struct("<4sIQI")


@dataclass
class Provenance:
    centered: bool = False
    scale_factor: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class LabeledFeatures:
    """N x 24 rows: v1, v2, v3, barycenter, then n_v1, n_v2, n_v3, n_face."""

    features: np.ndarray
    labels: np.ndarray
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.features.ndim != 2 or self.features.shape[1] != FEATURE_DIMS:
            raise ShapeError(f"feature matrix must be N x 24, got {self.features.shape}")
        if len(self.labels) != len(self.features):
            raise ShapeError("feature and label counts differ")

    @property
    def positions(self) -> np.ndarray:
        """Barycenter columns, the coordinate space used for grouping."""
        return self.features[:, BARY_COLS]

    def denormalized(self) -> np.ndarray:
        """Coordinates mapped back to the source mesh frame."""
        out = self.features.copy()
        p = self.provenance
        if p.centered:
            xyz = out[:, COORD_COLS].reshape(-1, 4, 3) * p.scale_factor + np.asarray(p.center)
            out[:, COORD_COLS] = xyz.reshape(-1, 12)
        return out


def featurize(labeled: LabeledMesh, normalize: bool = True) -> LabeledFeatures:
    mesh = labeled.mesh
    tri = mesh.vertices[mesh.faces]
    bary = barycenters(mesh)
    vn = vertex_normals(mesh)[mesh.faces]
    fn = face_normals(mesh)
    coords = np.concatenate([tri, bary[:, None, :]], axis=1)  # F x 4 x 3
    normals = np.concatenate([vn, fn[:, None, :]], axis=1)
    prov = Provenance()
    if normalize:
        center = bary.mean(axis=0)
        radius = np.linalg.norm(bary - center, axis=1).max()
        if radius <= 0:
            radius = 1.0
        coords = (coords - center) / radius
        prov = Provenance(True, float(radius), tuple(float(c) for c in center))
    rows = np.concatenate([coords.reshape(-1, 12), normals.reshape(-1, 12)], axis=1)
    return LabeledFeatures(rows, labeled.labels.copy(), prov)


def save_features(path, lf: LabeledFeatures) -> None:
    n = len(lf.features)
    with open(path, "wb") as fh:
        fh.write(_MRFT_HEADER.pack(MRFT_MAGIC, MRFT_VERSION, n, FEATURE_DIMS))
        fh.write(lf.features.astype("<f4").tobytes())
        fh.write(lf.labels.astype(np.uint8).tobytes())


def load_features(path) -> LabeledFeatures:
    data = Path(path).read_bytes()
    if len(data) < _MRFT_HEADER.size:
        raise ParseError(f"{path}: truncated feature header")
    magic, version, n, dims = _MRFT_HEADER.unpack_from(data)
    if magic != MRFT_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != MRFT_VERSION or dims != FEATURE_DIMS:
        raise ParseError(f"{path}: unsupported version {version} / dims {dims}")
    off = _MRFT_HEADER.size
    if len(data) != off + n * dims * 4 + n:
        raise ParseError(f"{path}: size does not match header")
    feats = np.frombuffer(data, "<f4", n * dims, off).reshape(n, dims)
    labels = np.frombuffer(data, np.uint8, n, off + n * dims * 4)
    return LabeledFeatures(feats.astype(np.float64), labels.astype(np.int64))
