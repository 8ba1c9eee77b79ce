"""
Checking BPTT against finite differences
========================================

The CIFG network is written directly in numpy, so its hand-derived
gradients deserve a numerical check.
"""

import numpy as np

from fedemoji.corpus import Example
from fedemoji.model import FULL_SIZE_CONFIG, ModelConfig, init_params, loss_and_grads, param_count

# The production-sized model from the original deployment, counted in closed form.
print("full-size parameter count:", param_count(FULL_SIZE_CONFIG))

cfg = ModelConfig(vocab_size=50, embed_dim=8, num_layers=2, hidden_dim=12, num_classes=6)
params = init_params(cfg, seed=0)
rng = np.random.default_rng(0)
batch = [Example(tuple(rng.integers(0, 50, size=rng.integers(1, 8)).tolist()),
                 int(rng.integers(0, 6))) for _ in range(5)]

loss, grad = loss_and_grads(params, batch)
print("loss %.4f (log C = %.4f)" % (loss, np.log(cfg.num_classes)))

# Central differences on a random subset of coordinates.
eps = 1e-4
worst = 0.0
for k in rng.choice(params.flat.size, size=200, replace=False):
    up, down = params.flat.copy(), params.flat.copy()
    up[k] += eps
    down[k] -= eps
    num = (loss_and_grads(params.with_flat(up), batch)[0]
           - loss_and_grads(params.with_flat(down), batch)[0]) / (2 * eps)
    worst = max(worst, abs(num - grad.flat[k]) / max(abs(num), abs(grad.flat[k]), 1e-8))
print("worst relative error over 200 coordinates: %.2e" % worst)
