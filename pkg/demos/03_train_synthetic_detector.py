"""End-to-end: generate data, train on normals only, score the test set.

A small detector (reduced width and latent size) is trained for a few
minutes on the disk/stripe benchmark, then both anomaly scores are compared
by AUC. Scale up `base_width`, `latent_dim`, and `epochs` for the full
configuration.
"""

import numpy as np

from lrad import (
    NetworkSpec,
    SynthSpec,
    TrainConfig,
    one_class_split,
    synth_generate,
    train,
)
from lrad.evaluate import auc, score_latent, score_pixel
from lrad.trainer import save_checkpoint

# 550 disk images; the 50 anomalous ones carry a striped patch.
data = synth_generate(SynthSpec(n_normal=550, n_anomaly=50, seed=0))
split = one_class_split(data, held_class=1, train_fraction=500 / 550, seed=0)
print(f"train normals: {len(split.train_normals)}, test: {len(split.test)} "
      f"({sum(split.test_anomaly_flags)} anomalous)")

config = TrainConfig(epochs=6, batch_size=64, seed=7)
spec = NetworkSpec(in_channels=1, image_size=32, latent_dim=32, base_width=16)
state, history = train(config, split, spec=spec, log=print)

flags = np.array(split.test_anomaly_flags)
latent = score_latent(state, split.test.images)
pixel = score_pixel(state, split.test.images)
print(f"\nlatent-score AUC: {auc(flags, latent):.4f}")
print(f"pixel-score AUC:  {auc(flags, pixel):.4f}")
print(f"mean latent score, normal vs anomalous: "
      f"{latent[~flags].mean():.3f} vs {latent[flags].mean():.3f}")

save_checkpoint(state, history, "demo_model.lrad")
print("checkpoint written to demo_model.lrad")
