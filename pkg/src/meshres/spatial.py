"""Exact farthest-point sampling and k-nearest-neighbor search.

Both are brute force over squared Euclidean distances computed from
coordinate differences, with ties always resolved toward the smaller
index, so results are reproducible bit for bit.
"""
from __future__ import annotations

import numpy as np

_CHUNK_ELEMS = 1 << 21


def fps(points: np.ndarray, m: int) -> np.ndarray:
    """Greedy farthest-point order starting from index 0."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got {m}")
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = 0
    mind = np.sum((points - points[0]) ** 2, axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(mind))  # first maximum -> smallest index
        chosen[i] = nxt
        np.minimum(mind, np.sum((points - points[nxt]) ** 2, axis=1), out=mind)
    return chosen


def sq_dists(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    diff = queries[:, None, :] - points[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def knn(points: np.ndarray, queries: np.ndarray, k: int,
        return_dist: bool = False):
    """Indices (M, k) of the k nearest points per query, nearest first."""
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")
    m = len(queries)
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k))
    step = max(1, _CHUNK_ELEMS // max(n, 1))
    for lo in range(0, m, step):
        d = sq_dists(queries[lo:lo + step], points)
        if k < n:
            part = np.argpartition(d, k - 1, axis=1)[:, :k]
            kth = np.take_along_axis(d, part, 1).max(axis=1)
            # rows where the k-th distance is shared by points outside the partition
            crowded = np.count_nonzero(d <= kth[:, None], axis=1) > k
        else:
            part = np.broadcast_to(np.arange(n), d.shape).copy()
            crowded = np.zeros(len(d), dtype=bool)
        pd = np.take_along_axis(d, part, 1)
        order = np.lexsort((part, pd), axis=1)
        rows_idx = np.take_along_axis(part, order, 1)
        for r in np.flatnonzero(crowded):
            rows_idx[r] = np.argsort(d[r], kind="stable")[:k]
        idx[lo:lo + step] = rows_idx
        dist[lo:lo + step] = np.take_along_axis(d, rows_idx, 1)
    if return_dist:
        return idx, np.sqrt(dist)
    return idx
