"""Random rotation / translation / rescaling of labeled surfaces.

Every transform is drawn from its own Philox stream keyed by
``(seed, surface index, copy index)``, so expansion gives the same result
regardless of the order or thread count used to produce it.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .mesh import LabeledMesh, TriangleMesh


@dataclass
class AugmentConfig:
    p_axis: float = 0.5
    translate_range: tuple[float, float] = (-10.0, 10.0)
    scale_range: tuple[float, float] = (0.8, 1.2)
    angle_range: tuple[float, float] = (-math.pi, math.pi)
    copies: int = 4
    seed: int = 0
    # one ratio for all three axes instead of one per axis
    isotropic_scale: bool = False
    # one coin for the whole rotation instead of one per axis
    rotation_per_surface: bool = False

    def __post_init__(self):
        self.translate_range = tuple(float(x) for x in self.translate_range)
        self.scale_range = tuple(float(x) for x in self.scale_range)
        self.angle_range = tuple(float(x) for x in self.angle_range)
        for lo, hi in (self.translate_range, self.scale_range, self.angle_range):
            if lo > hi:
                raise ValueError("augmentation ranges must be ordered (lo <= hi)")
        if not 0.0 <= self.p_axis <= 1.0:
            raise ValueError("p_axis must lie in [0, 1]")
        if self.copies < 0:
            raise ValueError("copies must be >= 0")


@dataclass
class AugmentSample:
    scale_active: np.ndarray
    scale: np.ndarray
    rotate_active: np.ndarray
    angles: np.ndarray
    translate_active: np.ndarray
    offsets: np.ndarray

    @property
    def rotation(self) -> np.ndarray:
        r = np.eye(3)
        for axis in range(3):
            if self.rotate_active[axis]:
                r = axis_rotation(axis, self.angles[axis]) @ r
        return r

    def apply(self, points: np.ndarray) -> np.ndarray:
        s = np.where(self.scale_active, self.scale, 1.0)
        t = np.where(self.translate_active, self.offsets, 0.0)
        return (points * s) @ self.rotation.T + t


def axis_rotation(axis: int, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    r = np.eye(3)
    r[i, i] = r[j, j] = c
    r[i, j], r[j, i] = -s, s
    return r


def stream(seed: int, surface: int, copy: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, surface, copy])))


def draw_sample(config: AugmentConfig, rng: np.random.Generator) -> AugmentSample:
    p = config.p_axis
    # fixed draw order keeps stream consumption independent of the outcome
    scale_active = rng.random(3) < p
    scale = rng.uniform(*config.scale_range, size=3)
    rotate_active = rng.random(3) < p
    angles = rng.uniform(*config.angle_range, size=3)
    translate_active = rng.random(3) < p
    offsets = rng.uniform(*config.translate_range, size=3)
    if config.isotropic_scale:
        scale_active[:] = scale_active[0]
        scale[:] = scale[0]
    if config.rotation_per_surface:
        rotate_active[:] = rotate_active[0]
    return AugmentSample(scale_active, scale, rotate_active, angles, translate_active, offsets)


def augment_surface(labeled: LabeledMesh, config: AugmentConfig,
                    rng: np.random.Generator) -> tuple[LabeledMesh, AugmentSample]:
    """Scale, then rotate about x, y, z, then translate (each per axis)."""
    sample = draw_sample(config, rng)
    verts = sample.apply(labeled.mesh.vertices)
    out = LabeledMesh(TriangleMesh(verts, labeled.mesh.faces.copy()), labeled.labels.copy())
    return out, sample


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MESHRES_THREADS", "1")))
    except ValueError:
        return 1


def expand_dataset(surfaces: list[LabeledMesh], config: AugmentConfig,
                   return_ids: bool = False):
    """Originals followed by ``copies`` augmented versions of each surface.

    With ``return_ids`` also returns ``(surface index, copy index)`` per
    output mesh; originals carry copy index -1.
    """
    jobs = [(s, c) for s in range(len(surfaces)) for c in range(config.copies)]

    def run(job):
        s, c = job
        return augment_surface(surfaces[s], config, stream(config.seed, s, c))[0]

    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            augmented = list(pool.map(run, jobs))
    else:
        augmented = [run(j) for j in jobs]
    out = [m.copy() for m in surfaces] + augmented
    if return_ids:
        ids = [(s, -1) for s in range(len(surfaces))] + jobs
        return out, ids
    return out
