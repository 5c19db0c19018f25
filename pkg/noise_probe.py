"""Dev-only: does disabling train-time noise smooth the eval-loss grind?"""
import json
import sys

import numpy as np

from stegocrypt.autodiff import tune_allocator
from stegocrypt.optim import AdamConfig
from stegocrypt.pipeline import TrainConfig, moving_average, train

tune_allocator()

results = {}
for noise in (0.01, 0.0):
    for lr in (4e-4, 2e-4):
        cfg = TrainConfig(beta=1.0, epochs=150, pairs=24, batch_size=8, image_size=16,
                          grid_side=2, cipher_seed=42, dataset_seed=7, init_seed=1,
                          noise_stddev=noise, adam=AdamConfig(learning_rate=lr))
        rep = train(cfg)
        series = np.array([r.encode_loss for r in rep.records])
        ma = moving_average(series, 10)
        start = len(series) // 5
        viol = int(sum(ma[i] > ma[i - 1] for i in range(start + 1, len(series))))
        grind = series[60:]
        diffs = np.diff(grind)
        key = f"noise{noise}_lr{lr}"
        results[key] = {
            "violations": viol,
            "first": float(series[0]),
            "final": float(series[-1]),
            "ratio": float(series[-1] / series[0]),
            "grind_step_std": float(diffs.std()),
            "grind_drift_per_epoch": float((grind[-1] - grind[0]) / len(grind)),
        }
        print(key, json.dumps(results[key]), flush=True)
with open("/tmp/noise_probe.json", "w") as fh:
    json.dump(results, fh, indent=1)
