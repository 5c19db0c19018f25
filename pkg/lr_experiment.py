"""Dev-only: find a learning rate whose 300-epoch toy run has a clean MA descent."""
import json
import time

from stegocrypt.autodiff import tune_allocator
from stegocrypt.optim import AdamConfig
from stegocrypt.pipeline import TrainConfig, moving_average, train

tune_allocator()

for lr in (4e-4, 2e-4):
    cfg = TrainConfig(beta=1.0, epochs=300, pairs=64, batch_size=8, image_size=32,
                      grid_side=2, cipher_seed=42, dataset_seed=7, init_seed=1,
                      adam=AdamConfig(learning_rate=lr))
    t0 = time.time()
    rep = train(cfg, on_epoch=lambda r: print(f"lr={lr} epoch {r.epoch}: {r.encode_loss:.6f}",
                                              flush=True) if r.epoch % 20 == 0 else None)
    series = [r.encode_loss for r in rep.records]
    ma = moving_average(series, 10)
    start = len(series) // 5
    viol = [(i, float(ma[i] - ma[i - 1])) for i in range(start + 1, len(series))
            if ma[i] > ma[i - 1]]
    out = {
        "lr": lr,
        "minutes": (time.time() - t0) / 60,
        "first": series[0],
        "final": series[-1],
        "ratio": series[-1] / series[0],
        "n_violations": len(viol),
        "violations_head": viol[:10],
        "series_every10": series[::10],
    }
    with open(f"/tmp/lr_{lr}.json", "w") as fh:
        json.dump(out, fh, indent=1)
    print(json.dumps(out, indent=1), flush=True)
