# A miniature resolution sweep: one model per training resolution, each
# evaluated natively and after KNN upsampling to the evaluation meshes.
#
# Real scans call for 2K..16K cells and hundreds of surfaces; this keeps the
# same structure at a size that finishes in a few minutes.
import tempfile

from meshres.augment import AugmentConfig
from meshres.experiment import ExperimentConfig, emit_report, run_sweep
from meshres.synth import SynthJawSpec, synth_generate

jaws = synth_generate(SynthJawSpec(cells=2200, seed=5), 8)
config = ExperimentConfig(
    resolutions=[1000, 2000], eval_resolutions=[2000], seed=0,
    augment=AugmentConfig(copies=1, seed=0),
    train={"epochs": 8, "batch_size": 4},
)
# eight epochs only show the plumbing; the models are far from converged
# and the scores are low. tests/test_acceptance.py trains a longer sweep.
out = tempfile.mkdtemp()
records = run_sweep(jaws, config, out)
print(emit_report(records, "md"))
print("run directory:", out)

# %% resuming: units whose checkpoint exists are not retrained
again = run_sweep(jaws, config, out)
print("retrained units:", sum("train_s" in r.timings for r in again))
