# Meshes, labels and quadric decimation.
#
# A synthetic jaw stands in for an intraoral scan: a gum strip (BG) with
# fourteen crowns labeled T1..T7, mirrored across the midline.
import tempfile
from pathlib import Path

import numpy as np

from meshres import io as mio
from meshres.decimate import DecimationConfig, decimate
from meshres.mesh import CLASS_NAMES
from meshres.synth import SynthJawSpec, synth_generate

# %% generate one jaw and look at its label histogram
jaw = synth_generate(SynthJawSpec(cells=5000, seed=1), 1)[0]
print("faces:", jaw.mesh.n_faces, "vertices:", jaw.mesh.n_vertices)
counts = np.bincount(jaw.labels, minlength=8)
print(dict(zip(CLASS_NAMES, counts.tolist())))

# %% round trip through OBJ + label sidecar
tmp = Path(tempfile.mkdtemp())
mio.save_labeled(jaw, tmp / "jaw.obj", tmp / "jaw.json")
back = mio.load_labeled(tmp / "jaw.obj", tmp / "jaw.json")
print("labels survive the round trip:", np.array_equal(back.labels, jaw.labels))

# %% decimate to a few resolutions; faces (and so labels) are only removed
for target in (4000, 2000, 1000):
    low = decimate(jaw, DecimationConfig(target))
    share = np.bincount(low.labels, minlength=8) / low.mesh.n_faces
    print(target, "->", low.mesh.n_faces, "faces, BG share %.3f" % share[0])

# %% the accepted collapse costs add up to a monotone total
_, costs = decimate(jaw, 1000, return_trace=True)
print("collapses:", len(costs), "total cost %.4g" % np.sum(costs))
