"""Procedural lower-jaw stand-ins for desk-scale experiments.

A jaw is a horseshoe-shaped gum strip (a regular triangulated sheet)
carrying one raised crown per tooth. Crowns are mirrored across the
midline: the tooth nearest the midline on either side is T7 (central
incisor), the farthest is T1 (2nd molar). Faces whose barycenter lies
inside a crown footprint take that tooth's class, the rest are BG.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import LabeledMesh, TriangleMesh

# mesio-distal crown widths (mm), central incisor to 2nd molar
TOOTH_WIDTHS = (5.2, 5.8, 6.8, 7.0, 7.2, 11.0, 10.5)


@dataclass
class SynthJawSpec:
    teeth: int = 14
    arch_radius: float = 25.0
    strip_width: float = 12.0
    bump_height: float = 6.0
    cells: int = 5000
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.teeth <= 14:
            raise ValueError("teeth must lie in [1, 14]")
        if min(self.arch_radius, self.strip_width, self.bump_height, self.cells) <= 0:
            raise ValueError("dimensions must be positive")


def _grid(spec: SynthJawSpec, arc_len: float):
    quads = math.ceil(spec.cells / 2)
    nu = max(2, math.ceil(math.sqrt(quads * arc_len / spec.strip_width)))
    nw = max(2, math.ceil(quads / nu))
    return nu, nw


def synth_jaw(spec: SynthJawSpec, rng: np.random.Generator) -> LabeledMesh:
    radius = spec.arch_radius * rng.uniform(0.95, 1.05)
    height = spec.bump_height * rng.uniform(0.85, 1.15)
    per_side = [(spec.teeth + 1) // 2, spec.teeth // 2]
    widths = [np.array(TOOTH_WIDTHS[:n]) * rng.uniform(0.93, 1.07, n) for n in per_side]
    gap = 0.4
    half_len = max(w.sum() + gap * len(w) for w in widths) + 4.0
    theta_max = half_len / radius
    nu, nw = _grid(spec, 2 * half_len)

    # parameter grid: s = arc length along the midline curve, t = across
    s = np.linspace(-half_len, half_len, nu + 1)
    t = np.linspace(-0.5, 0.5, nw + 1) * spec.strip_width
    S, T = np.meshgrid(s, t, indexing="ij")
    theta = S / radius
    r = radius + T
    x, y = r * np.sin(theta), -r * np.cos(theta)
    # low gum ridge across the strip plus crowns
    z = 1.5 * np.cos(np.pi * T / spec.strip_width)

    centers, cls_of, half_w = [], [], []
    for side, sign in enumerate((1.0, -1.0)):
        pos = 0.0
        for i, w in enumerate(widths[side]):
            centers.append(sign * (pos + gap / 2 + w / 2))
            cls_of.append(7 - i)
            half_w.append(w / 2)
            pos += w + gap
    centers, cls_of, half_w = np.array(centers), np.array(cls_of), np.array(half_w)
    half_b = 0.32 * spec.strip_width

    def footprint(ss, tt):
        rho2 = ((ss[..., None] - centers) / half_w) ** 2 + (tt[..., None] / half_b) ** 2
        return rho2

    rho2 = footprint(S, T)
    crown = np.clip(1.0 - rho2 ** 2, 0.0, None) * height
    # molars a little taller than incisors
    crown *= 0.8 + 0.05 * (7 - cls_of)
    z = z + crown.max(axis=-1) + rng.normal(0.0, spec.noise, S.shape)

    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    ij = np.arange((nu + 1) * (nw + 1)).reshape(nu + 1, nw + 1)
    a, b = ij[:-1, :-1].ravel(), ij[1:, :-1].ravel()
    c, d = ij[1:, 1:].ravel(), ij[:-1, 1:].ravel()
    # wound so normals point up (+z) on the flat gum
    faces = np.concatenate([np.stack([a, d, b], 1), np.stack([b, d, c], 1)])

    fs = (S.ravel()[faces]).mean(axis=1)
    ft = (T.ravel()[faces]).mean(axis=1)
    frho = footprint(fs, ft)
    inside = frho < 1.0
    labels = np.where(inside.any(axis=1), cls_of[np.argmin(frho, axis=1)], 0)

    # small rigid jitter of the whole jaw in the occlusal plane
    phi = rng.uniform(-0.05, 0.05)
    rot = np.array([[math.cos(phi), -math.sin(phi), 0.0],
                    [math.sin(phi), math.cos(phi), 0.0], [0.0, 0.0, 1.0]])
    verts = verts @ rot.T + np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0])
    return LabeledMesh(TriangleMesh(verts, faces), labels)


def synth_generate(spec: SynthJawSpec, count: int) -> list[LabeledMesh]:
    return [synth_jaw(spec, np.random.default_rng([spec.seed, i])) for i in range(count)]
