# 24-d cell features and seeded augmentation.
import math

import numpy as np

from meshres.augment import AugmentConfig, augment_surface, expand_dataset, stream
from meshres.decimate import decimate
from meshres.features import featurize
from meshres.synth import SynthJawSpec, synth_generate

jaw = decimate(synth_generate(SynthJawSpec(cells=2400, seed=2), 1)[0], 2000)

# %% one row per cell: three corners, barycenter, three vertex normals, face normal
lf = featurize(jaw, normalize=True)
print(lf.features.shape)
print("barycenter centroid:", np.round(lf.positions.mean(axis=0), 12))
print("max barycenter radius:", np.linalg.norm(lf.positions, axis=1).max())
print("provenance:", lf.provenance)

# %% a single augmentation draw, keyed by (seed, surface, copy)
moved, sample = augment_surface(jaw, AugmentConfig(), stream(seed=7, surface=0, copy=0))
print("scale on axes", np.where(sample.scale_active, sample.scale, 1.0).round(3))
print("rotate axes", sample.rotate_active, "angles (deg)",
      np.degrees(sample.angles).round(1))
print("translate", np.where(sample.translate_active, sample.offsets, 0.0).round(2))
r = sample.rotation
print("R is a rotation:", np.allclose(r.T @ r, np.eye(3)), round(np.linalg.det(r), 12))

# %% expansion: originals first, then four copies per surface
expanded = expand_dataset([jaw, jaw], AugmentConfig(seed=7))
print(len(expanded), "surfaces")
same = expand_dataset([jaw, jaw], AugmentConfig(seed=7))
print("reproducible:", all(np.array_equal(a.mesh.vertices, b.mesh.vertices)
                           for a, b in zip(expanded, same)))
print("angle range:", -math.pi, math.pi)
