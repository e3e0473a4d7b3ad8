"""Robustness-aware fine-tuning of the linear toy embedder.

Run with ``python demos/enhance_demo.py`` (about half a minute). The
optimizer settings match the acceptance run: plain gradient descent with a
large step and one image per batch on a low-contrast synthetic corpus.
"""

import numpy as np

from robustkit import EnhanceConfig, TrainableEmbedder, default_spec, finetune
from robustkit.synthetic import synthetic_corpus

train = [x for x, _ in synthetic_corpus(200, seed=1, contrast=0.4)]
probe = [x for x, _ in synthetic_corpus(40, seed=2, prefix="probe", contrast=0.4)]
spec = default_spec("gaussian_noise")
base = TrainableEmbedder.from_toy()

for lam in (0.0, 1.0, 5.0):
    cfg = EnhanceConfig(lam=lam, epochs=50, learning_rate=0.3, batch_size=1, seed=0)
    model, history = finetune(base, base, train, spec, cfg, probe=probe)
    first, last = history[0], history[-1]
    drop = 1 - last.probe_rdr / first.probe_rdr
    print(f"lambda={lam:3.1f}  loss {first.total:+.5f} -> {last.total:+.5f}  "
          f"probe r_dr {first.probe_rdr:.5f} -> {last.probe_rdr:.5f} ({drop:.1%})  cos to base {last.probe_cos:.5f}")

# the weights moved away from the identity start
print("max |W - I| for the last run: %.3f" % np.abs(model.W - np.eye(base.dim)).max())
