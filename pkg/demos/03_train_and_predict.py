# Training the segmentation network on a handful of jaws.
#
# Four jaws at 1K cells; the network should memorize them within a couple
# of hundred Adam steps. This takes a few minutes on one core.
import time

import numpy as np

from meshres.decimate import decimate
from meshres.features import featurize
from meshres.metrics import evaluate
from meshres.model import ModelConfig, TrainConfig, measure_inference, predict, train
from meshres.synth import SynthJawSpec, synth_generate

jaws = synth_generate(SynthJawSpec(cells=2000, seed=3), 4)
data = [featurize(decimate(j, 1000)) for j in jaws]

cfg = ModelConfig()
t0 = time.perf_counter()
params, history = train(data, cfg, TrainConfig(epochs=200, batch_size=4, max_iterations=200))
print("trained %d steps in %.0fs" % (history[-1]["steps"], time.perf_counter() - t0))
for h in history[::40]:
    print("epoch %3d  lr %.4f  loss %.4f" % (h["epoch"], h["lr"], h["train_loss"]))

# %% training-set segmentation quality
gt = np.concatenate([d.labels for d in data])
pred = np.concatenate([predict(params, d, cfg)[0] for d in data])
rep = evaluate(gt, pred)
print("OA %.4f  macro DSC %.4f" % (rep.oa, rep.macro["dsc"]))
print("per-class DSC", np.round(rep.dsc, 3))

# %% wall-clock inference per surface
print(measure_inference(params, data[0], cfg, repeats=3))
