# KNN label transfer from a coarse mesh to a fine one, and the metrics.
import numpy as np

from meshres.decimate import decimate
from meshres.mesh import barycenters
from meshres.metrics import evaluate, format_table, report_rows
from meshres.synth import SynthJawSpec, synth_generate
from meshres.upsample import TransferConfig, knn_transfer

jaw = synth_generate(SynthJawSpec(cells=5000, seed=4), 1)[0]
lo, hi = decimate(jaw, 1000), decimate(jaw, 4000)

# %% transferring perfect coarse labels only loses cells along boundaries
reports = {}
for k in (1, 3, 5):
    up = knn_transfer(barycenters(lo.mesh), lo.labels, barycenters(hi.mesh), TransferConfig(k=k))
    rep = evaluate(hi.labels, up)
    print("k=%d  disagreements %d  macro DSC %.4f" % (k, np.sum(up != hi.labels), rep.macro["dsc"]))
    reports[k] = rep

# %% a corrupted prediction transfers worse
rng = np.random.default_rng(0)
noisy = lo.labels.copy()
flip = rng.random(len(noisy)) < 0.3
noisy[flip] = rng.integers(0, 8, flip.sum())
up = knn_transfer(barycenters(lo.mesh), noisy, barycenters(hi.mesh))
print("30%% corrupted source: macro DSC %.4f" % evaluate(hi.labels, up).macro["dsc"])

# %% the metric tables used by the sweep
agg, per_class = report_rows({(1000, 4000): reports[3]})
print(format_table(agg, ["input_size", "OA", "DSC", "SEN", "PPV"], "md"))
print(format_table(per_class, list(per_class[0]), "md"))
