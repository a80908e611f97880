"""Carry per-cell predictions from a coarse mesh to a finer one.

Each destination cell votes among the labels of its ``k`` nearest source
cells (by barycenter). Ties go to the label of the single nearest source
cell, or to the smallest class id with ``tie_break="smallest-class"``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSourceError, RangeError
from .mesh import NUM_CLASSES, LabeledMesh, TriangleMesh, barycenters
from .spatial import knn


@dataclass
class TransferConfig:
    k: int = 3
    tie_break: str = "nearest"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.tie_break not in ("nearest", "smallest-class"):
            raise ValueError(f"unknown tie_break {self.tie_break!r}")


def knn_transfer(src_barycenters, src_labels, dst_barycenters,
                 config: TransferConfig | None = None) -> np.ndarray:
    config = config or TransferConfig()
    src_labels = np.asarray(src_labels, dtype=np.int64)
    if len(src_labels) < config.k:
        raise InsufficientSourceError(
            f"{len(src_labels)} source cells for k={config.k}")
    if len(src_labels) and (src_labels.min() < 0 or src_labels.max() >= NUM_CLASSES):
        raise RangeError("source labels must lie in [0, 7]")
    idx = knn(src_barycenters, dst_barycenters, config.k)
    votes = src_labels[idx]
    if config.k == 1:
        return votes[:, 0].copy()
    counts = np.zeros((len(votes), NUM_CLASSES), dtype=np.int64)
    np.add.at(counts, (np.arange(len(votes))[:, None], votes), 1)
    top = counts.max(axis=1)
    winner = np.argmax(counts, axis=1)  # smallest class among the tied
    if config.tie_break == "nearest":
        tied = np.flatnonzero((counts == top[:, None]).sum(axis=1) > 1)
        # nearest neighbor whose class is among the tied leaders
        is_leader = counts[tied[:, None], votes[tied]] == top[tied, None]
        winner[tied] = votes[tied, np.argmax(is_leader, axis=1)]
    return winner


def upsample_prediction(low: LabeledMesh, high_mesh: TriangleMesh,
                        config: TransferConfig | None = None) -> LabeledMesh:
    """Pair ``high_mesh`` with labels transferred from ``low``'s predictions."""
    labels = knn_transfer(barycenters(low.mesh), low.labels, barycenters(high_mesh), config)
    return LabeledMesh(high_mesh, labels)
