import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshres.spatial import fps, knn


def knn_oracle(points, queries, k):
    out = []
    for q in queries:
        d = [(float(np.sum((p - q) ** 2)), i) for i, p in enumerate(points)]
        out.append([i for _, i in sorted(d)[:k]])
    return np.array(out)


def fps_oracle(points, m):
    chosen = [0]
    while len(chosen) < m:
        best, best_d = None, -1.0
        for i, p in enumerate(points):
            d = min(float(np.sum((p - points[c]) ** 2)) for c in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return np.array(chosen)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.booleans())
def test_knn_matches_oracle(seed, k, gridded):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 3, size=(40, 3)).astype(float) if gridded else rng.normal(size=(40, 3))
    q = rng.normal(size=(15, 3))
    assert np.array_equal(knn(pts, q, k), knn_oracle(pts, q, k))


def test_knn_self_first_and_distances():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(100, 3))
    idx, dist = knn(pts, pts, 4, return_dist=True)
    assert np.array_equal(idx[:, 0], np.arange(100))
    assert np.all(dist[:, 0] == 0)
    assert np.all(np.diff(dist, axis=1) >= 0)


def test_knn_full_k():
    pts = np.array([[0, 0, 0], [2, 0, 0], [1, 0, 0]], float)
    assert knn(pts, pts[:1], 3).tolist() == [[0, 2, 1]]


def test_knn_bad_k():
    with pytest.raises(ValueError):
        knn(np.zeros((3, 3)), np.zeros((1, 3)), 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 20), st.booleans())
def test_fps_matches_oracle(seed, m, gridded):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 3, size=(30, 3)).astype(float) if gridded else rng.normal(size=(30, 3))
    assert np.array_equal(fps(pts, m), fps_oracle(pts, m))


def test_fps_line():
    pts = np.arange(5, dtype=float)[:, None] * [1, 0, 0]
    assert fps(pts, 3).tolist() == [0, 4, 2]
