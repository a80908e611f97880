"""Quadric-error-metric edge-collapse decimation of labeled meshes.

Faces are never created, only removed, so every surviving face keeps
the label it had in the input.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFaceError, TargetUnreachableError, ValidationError
from .mesh import DEGENERATE_EPS, LabeledMesh, TriangleMesh, validate_mesh

log = logging.getLogger(__name__)

SINGULAR_TOL = 1e-10


@dataclass
class DecimationConfig:
    target_faces: int
    preserve_boundary: bool = True
    # weight of the edge-perpendicular planes added along open boundaries
    boundary_weight: float = 1.0

    def __post_init__(self):
        if self.target_faces < 4:
            raise ValueError("target_faces must be >= 4")


@dataclass
class CollapseCandidate:
    edge: tuple[int, int]
    cost: float
    target_position: np.ndarray


def plane_quadric(normal, point) -> np.ndarray:
    p = np.append(normal, -np.dot(normal, point))
    return np.outer(p, p)


def compute_quadrics(mesh: TriangleMesh) -> np.ndarray:
    """Per-vertex (V, 4, 4) sum of p p^T over incident face planes."""
    v = mesh.vertices[mesh.faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    norm = np.linalg.norm(n, axis=1)
    bad = np.flatnonzero(norm <= DEGENERATE_EPS)
    if len(bad):
        raise DegenerateFaceError(f"face {bad[0]} is degenerate")
    n /= norm[:, None]
    p = np.concatenate([n, -np.einsum("ij,ij->i", n, v[:, 0])[:, None]], axis=1)
    fq = p[:, :, None] * p[:, None, :]
    q = np.zeros((mesh.n_vertices, 4, 4))
    for corner in range(3):
        np.add.at(q, mesh.faces[:, corner], fq)
    return q


def quadric_error(q: np.ndarray, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(x @ q[:3, :3] @ x + 2.0 * (x @ q[:3, 3]) + q[3, 3])


def _best_position(q, p1, p2, scale):
    a = q[:3, :3]
    if abs(np.linalg.det(a)) >= SINGULAR_TOL * scale ** 3:
        x = np.linalg.solve(a, -q[:3, 3])
        return quadric_error(q, x), x
    best = None
    for x in (p1, p2, 0.5 * (p1 + p2)):
        c = quadric_error(q, x)
        if best is None or c < best[0]:
            best = (c, x)
    return best


def collapse_cost(q_sum: np.ndarray, v1, v2, scale: float = 1.0,
                  edge: tuple[int, int] = (-1, -1)) -> CollapseCandidate:
    """Optimal contraction target of an edge under the summed quadric.

    Falls back to the cheapest of the endpoints and midpoint when the
    linear system is near-singular (|det| < 1e-10 * scale**3).
    """
    p1 = np.asarray(v1, dtype=np.float64)
    p2 = np.asarray(v2, dtype=np.float64)
    cost, x = _best_position(q_sum, p1, p2, scale)
    return CollapseCandidate(edge, cost, np.array(x, dtype=np.float64))


def _cross_rows(tri: np.ndarray) -> np.ndarray:
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    return np.stack([e1[:, 1] * e2[:, 2] - e1[:, 2] * e2[:, 1],
                     e1[:, 2] * e2[:, 0] - e1[:, 0] * e2[:, 2],
                     e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]], axis=1)


class _Decimator:
    def __init__(self, labeled: LabeledMesh, config: DecimationConfig):
        mesh = labeled.mesh
        self.config = config
        self.scale = mesh.bbox_diagonal()
        self.pos = mesh.vertices.copy()
        self.faces = mesh.faces.copy()
        self.face_alive = np.ones(len(self.faces), dtype=bool)
        self.n_alive = len(self.faces)
        self.vfaces: list[set[int]] = [set() for _ in range(mesh.n_vertices)]
        for f, tri in enumerate(self.faces.tolist()):
            for v in tri:
                self.vfaces[v].add(f)
        self.vert_alive = np.array([bool(s) for s in self.vfaces])
        self.boundary = [self._is_boundary_vertex(v) for v in range(mesh.n_vertices)]
        self.quadrics = compute_quadrics(mesh)
        if config.preserve_boundary:
            self._add_boundary_planes()
        self.stamp = [0] * mesh.n_vertices
        self.heap: list = []
        self.parked: dict[int, set[tuple[int, int]]] = {}
        self.accepted_costs: list[float] = []

    # -- topology helpers ---------------------------------------------
    def _edge_faces(self, a, b):
        return self.vfaces[a] & self.vfaces[b]

    def _neighbors(self, v):
        out = set()
        for f in self.vfaces[v]:
            out.update(self.faces[f].tolist())
        out.discard(v)
        return out

    def _is_boundary_vertex(self, v):
        counts: dict[int, int] = {}
        for f in self.vfaces[v]:
            for w in self.faces[f].tolist():
                if w != v:
                    counts[w] = counts.get(w, 0) + 1
        return any(c == 1 for c in counts.values())

    def _add_boundary_planes(self):
        w = self.config.boundary_weight
        for v in range(len(self.vfaces)):
            for u in self._neighbors(v):
                if u <= v:
                    continue
                shared = self._edge_faces(v, u)
                if len(shared) != 1:
                    continue
                (f,) = shared
                a, b, c = self.pos[self.faces[f]]
                fn = np.cross(b - a, c - a)
                m = np.cross(self.pos[u] - self.pos[v], fn)
                norm = np.linalg.norm(m)
                if norm <= DEGENERATE_EPS:
                    continue
                bq = w * plane_quadric(m / norm, self.pos[v])
                self.quadrics[v] += bq
                self.quadrics[u] += bq

    # -- candidate evaluation -----------------------------------------
    def _candidate(self, a, b):
        q = self.quadrics[a] + self.quadrics[b]
        pa, pb = self.pos[a], self.pos[b]
        if self.config.preserve_boundary:
            ba, bb = self.boundary[a], self.boundary[b]
            if ba and bb:
                # boundary edge: stay on the boundary segment
                options = [pa, pb, 0.5 * (pa + pb)]
            elif ba:
                options = [pa]
            elif bb:
                options = [pb]
            else:
                options = None
            if options is not None:
                best = min(((quadric_error(q, x), i) for i, x in enumerate(options)))
                return best[0], options[best[1]]
        return _best_position(q, pa, pb, self.scale)

    def _push(self, a, b):
        if a > b:
            a, b = b, a
        cost, x = self._candidate(a, b)
        heapq.heappush(self.heap, (cost, a, b, self.stamp[a], self.stamp[b], tuple(x)))

    def _park(self, a, b):
        self.parked.setdefault(a, set()).add((a, b))
        self.parked.setdefault(b, set()).add((a, b))

    def _legal(self, a, b, x):
        shared = self._edge_faces(a, b)
        if len(shared) not in (1, 2):
            return False
        opposite = set()
        for f in shared:
            opposite.update(self.faces[f].tolist())
        opposite -= {a, b}
        if self._neighbors(a) & self._neighbors(b) != opposite:
            return False
        if len(shared) == 2 and self.boundary[a] and self.boundary[b]:
            # interior edge joining two boundary vertices would pinch the surface
            return False
        others = sorted((self.vfaces[a] | self.vfaces[b]) - shared)
        if not others:
            return True
        tris = self.faces[others]
        old = self.pos[tris]
        new = old.copy()
        new[(tris == a) | (tris == b)] = x
        n_old = _cross_rows(old)
        n_new = _cross_rows(new)
        if np.any(np.einsum("ij,ij->i", n_new, n_new) <= DEGENERATE_EPS ** 2):
            return False
        if np.any(np.einsum("ij,ij->i", n_old, n_new) < 0):
            return False
        merged = np.sort(np.where(tris == b, a, tris), axis=1)
        return len(np.unique(merged, axis=0)) == len(merged)

    def _collapse(self, a, b, x):
        shared = self._edge_faces(a, b)
        for f in shared:
            self.face_alive[f] = False
            for w in self.faces[f].tolist():
                self.vfaces[w].discard(f)
        self.n_alive -= len(shared)
        for f in self.vfaces[b]:
            tri = self.faces[f]
            tri[tri == b] = a
            self.vfaces[a].add(f)
        self.vfaces[b] = set()
        self.vert_alive[b] = False
        self.pos[a] = x
        self.quadrics[a] = self.quadrics[a] + self.quadrics[b]
        self.stamp[a] += 1
        self.stamp[b] += 1
        ring = self._neighbors(a)
        for w in (a, *ring):
            self.boundary[w] = self._is_boundary_vertex(w)
        for w in (a, b, *ring):
            for e in self.parked.pop(w, ()):
                self._requeue(*e)
        for w in sorted(ring):
            self._push(a, w)
        return len(shared)

    def _requeue(self, a, b):
        if self.vert_alive[a] and self.vert_alive[b] and self._edge_faces(a, b):
            self._push(a, b)

    def run(self):
        target = self.config.target_faces
        if self.n_alive <= target:
            return
        for v in range(len(self.vfaces)):
            for u in sorted(self._neighbors(v)):
                if u > v:
                    self._push(v, u)
        while self.n_alive > target:
            if not self.heap:
                raise TargetUnreachableError(
                    f"no legal collapse left at {self.n_alive} faces (target {target})")
            cost, a, b, sa, sb, x = heapq.heappop(self.heap)
            if not (self.vert_alive[a] and self.vert_alive[b]):
                continue
            if sa != self.stamp[a] or sb != self.stamp[b]:
                continue
            if not self._edge_faces(a, b):
                continue
            x = np.array(x)
            if not self._legal(a, b, x):
                self._park(a, b)
                continue
            self._collapse(a, b, x)
            self.accepted_costs.append(cost)

    def result(self, labels: np.ndarray) -> LabeledMesh:
        faces = self.faces[self.face_alive]
        used = np.flatnonzero(self.vert_alive)
        remap = np.full(len(self.pos), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return LabeledMesh(TriangleMesh(self.pos[used], remap[faces]),
                           labels[self.face_alive])


def decimate(labeled: LabeledMesh, config: DecimationConfig | int,
             return_trace: bool = False):
    """Collapse edges cheapest-first until ``target_faces`` is reached.

    Interior collapses remove two faces and boundary collapses one, so the
    result holds ``target_faces`` or ``target_faces - 1`` faces.
    Collapses that flip a face, create a degenerate or duplicate face, or
    break edge-manifoldness are parked and re-examined once their
    neighborhood changes.
    """
    if isinstance(config, int):
        config = DecimationConfig(config)
    validate_mesh(labeled.mesh)
    if config.target_faces > labeled.mesh.n_faces:
        raise ValidationError(
            f"target {config.target_faces} exceeds face count {labeled.mesh.n_faces}")
    if config.target_faces == labeled.mesh.n_faces:
        out = labeled.copy()
        return (out, []) if return_trace else out
    dec = _Decimator(labeled, config)
    dec.run()
    out = dec.result(labeled.labels)
    log.debug("decimated %d -> %d faces", labeled.mesh.n_faces, out.mesh.n_faces)
    return (out, dec.accepted_costs) if return_trace else out
