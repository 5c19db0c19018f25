"""Dev-only: one full pass per candidate lr = criterion 6 + 8 + toy examples."""
import json
import sys
import time

import numpy as np

from stegocrypt.autodiff import Tensor, mse_and_grad, tune_allocator
from stegocrypt.cipher import derive_key, encrypt
from stegocrypt.imaging import ImageBuffer, mse_per_pixel, synth_dataset
from stegocrypt.network import forward_encoder
from stegocrypt.optim import AdamConfig
from stegocrypt.pipeline import (TrainConfig, build_model, moving_average, pair_key,
                                 receive, residual_attack, send, train)

tune_allocator()
lr = float(sys.argv[1]) if len(sys.argv) > 1 else 4e-4

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
    "train_minutes": (time.time() - t0) / 60,
    "first": series[0], "final": series[-1], "ratio": series[-1] / series[0],
    "n_violations": len(viol), "violations_head": viol[:10],
    "series_every10": series[::10],
}

model = rep.model
images = synth_dataset(cfg.dataset_seed, 2 * cfg.total_pairs, cfg.image_size,
                       cfg.dataset_kind)
total = cfg.total_pairs
holdout = [(images[i], images[i + total], pair_key(cfg, i))
           for i in range(cfg.pairs, total)]

sims_plain, sims_enc, deltas = [], [], []
for cover, secret, key in holdout:
    _, s_enc = residual_attack(secret, cover, key, model)
    _, s_plain = residual_attack(secret, cover, None, model)
    sims_enc.append(s_enc)
    sims_plain.append(s_plain)
    container = forward_encoder(model.encoder, model.encoder_params,
                                Tensor(encrypt(secret, key).to_float()),
                                Tensor(cover.to_float()))
    clamped = Tensor(np.clip(container.data, 0.0, 1.0))
    fmse = mse_and_grad(clamped, Tensor(cover.to_float()))[0] * 255.0 ** 2
    bmse = mse_per_pixel(ImageBuffer.from_float(container.data), cover)
    deltas.append(abs(fmse - bmse))
out["c8_mean_plain"] = float(np.mean(sims_plain))
out["c8_mean_encrypted"] = float(np.mean(sims_enc))
out["c8_gap"] = out["c8_mean_plain"] - out["c8_mean_encrypted"]
out["quant_delta_max"] = float(max(deltas))

untrained = build_model(3, cfg.noise_stddev, init_seed=999)
tr, un, cc, cs, wk_r, wk_w = [], [], [], [], [], []
wrong = derive_key(cfg.cipher_seed + 9999, cfg.grid_side)
for cover, secret, key in holdout:
    container = send(secret, cover, key, model)
    cc.append(mse_per_pixel(cover, container))
    cs.append(mse_per_pixel(cover, secret))
    _, s_right = receive(container, key, model)
    _, s_wrong = receive(container, wrong, model)
    tr.append(mse_per_pixel(secret, s_right))
    wk_r.append(mse_per_pixel(secret, s_right))
    wk_w.append(mse_per_pixel(secret, s_wrong))
    u_container = send(secret, cover, key, untrained)
    _, u_secret = receive(u_container, key, untrained)
    un.append(mse_per_pixel(secret, u_secret))
out["receive_trained"] = float(np.mean(tr))
out["receive_untrained"] = float(np.mean(un))
out["receive_ratio"] = out["receive_untrained"] / out["receive_trained"]
out["cover_vs_container"] = float(np.mean(cc))
out["cover_vs_secret"] = float(np.mean(cs))
out["wrongkey_right"] = float(np.mean(wk_r))
out["wrongkey_wrong"] = float(np.mean(wk_w))

with open(f"/tmp/final_{lr}.json", "w") as fh:
    json.dump(out, fh, indent=1)
print(json.dumps(out, indent=1), flush=True)
