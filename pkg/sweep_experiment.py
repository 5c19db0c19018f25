"""Dev-only: validate beta-ordering robustness for the acceptance sweep."""
import json
import time
from dataclasses import replace

import numpy as np

from stegocrypt.autodiff import tune_allocator
from stegocrypt.pipeline import TrainConfig, train

tune_allocator()

base = TrainConfig(epochs=100, pairs=24, batch_size=8, image_size=16,
                   grid_side=2, cipher_seed=42)
results = {}
t0 = time.time()
for seed in (1, 2, 3):
    for beta in (0.25, 0.75, 1.0):
        cfg = replace(base, beta=beta, init_seed=seed, dataset_seed=100 + seed)
        rec = train(cfg).records[-1]
        results[f"s{seed}_b{beta}"] = (rec.cover_mse, rec.secret_mse)
        print(f"seed {seed} beta {beta}: cover={rec.cover_mse:.2f} secret={rec.secret_mse:.2f}",
              flush=True)
out = {"minutes": (time.time() - t0) / 60, "runs": results}
for beta in (0.25, 0.75, 1.0):
    cov = float(np.mean([results[f"s{s}_b{beta}"][0] for s in (1, 2, 3)]))
    sec = float(np.mean([results[f"s{s}_b{beta}"][1] for s in (1, 2, 3)]))
    out[f"mean_b{beta}"] = (cov, sec)
with open("/tmp/sweep_trial.json", "w") as fh:
    json.dump(out, fh, indent=1)
print(json.dumps(out, indent=1), flush=True)
