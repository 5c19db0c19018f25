"""Dev-only dry run of the heavy acceptance criteria (not shipped)."""
import json
import time
from dataclasses import replace

import numpy as np

from stegocrypt.autodiff import Tensor, mse_and_grad, tune_allocator
from stegocrypt.cipher import encrypt
from stegocrypt.imaging import ImageBuffer, mse_per_pixel, synth_dataset, to_grayscale
from stegocrypt.network import forward_encoder
from stegocrypt.pipeline import (TrainConfig, moving_average, pair_key,
                                 residual_attack, train)

tune_allocator()
out = {}

C6 = TrainConfig(beta=1.0, epochs=300, pairs=64, batch_size=8, image_size=32,
                 grid_side=2, cipher_seed=42, dataset_seed=7, init_seed=1)

t0 = time.time()
report = train(C6, on_epoch=lambda r: print(f"epoch {r.epoch}: {r.encode_loss:.6f}", flush=True)
               if r.epoch % 10 == 0 else None)
out["c6_minutes"] = (time.time() - t0) / 60
series = [r.encode_loss for r in report.records]
out["c6_first"] = series[0]
out["c6_final"] = series[-1]
out["c6_ratio"] = series[-1] / series[0]
ma = moving_average(series, 10)
start = len(series) // 5
viol = [(i, float(ma[i] - ma[i - 1])) for i in range(start + 1, len(series)) if ma[i] > ma[i - 1]]
out["c6_ma_violations"] = viol[:20]
out["c6_records_tail"] = [(r.cover_mse, r.secret_mse) for r in report.records[-3:]]

with open("/tmp/c6_report.json", "w") as fh:
    json.dump(out, fh, indent=1)
print("C6 summary:", json.dumps(out, indent=1), flush=True)

# criterion 8: residual attack on 16 held-out pairs with the c6 model
model = report.model
images = synth_dataset(C6.dataset_seed, 2 * C6.total_pairs, C6.image_size, C6.dataset_kind)
total = C6.total_pairs
sims_plain, sims_enc = [], []
for i in range(C6.pairs, total):
    cover, secret = images[i], images[i + total]
    key = pair_key(C6, i)
    _, s_enc = residual_attack(secret, cover, key, model)
    _, s_plain = residual_attack(secret, cover, None, model)
    sims_enc.append(s_enc)
    sims_plain.append(s_plain)
out["c8_mean_plain"] = float(np.mean(sims_plain))
out["c8_mean_encrypted"] = float(np.mean(sims_enc))
out["c8_gap"] = out["c8_mean_plain"] - out["c8_mean_encrypted"]

# quantization consistency on held-out containers
deltas = []
for i in range(C6.pairs, total):
    cover, secret = images[i], images[i + total]
    key = pair_key(C6, i)
    container = forward_encoder(model.encoder, model.encoder_params,
                                Tensor(encrypt(secret, key).to_float()),
                                Tensor(cover.to_float()))
    fmse = mse_and_grad(container, Tensor(cover.to_float()))[0] * 255.0 ** 2
    bmse = mse_per_pixel(ImageBuffer.from_float(container.data), cover)
    deltas.append(abs(fmse - bmse))
out["quant_delta_max"] = float(max(deltas))

# receive-quality vs untrained baseline (send/receive example)
from stegocrypt.pipeline import build_model, receive, send
untrained = build_model(3, C6.noise_stddev, init_seed=999)
mse_trained, mse_untrained = [], []
for i in range(C6.pairs, total):
    cover, secret = images[i], images[i + total]
    key = pair_key(C6, i)
    for m, acc in ((model, mse_trained), (untrained, mse_untrained)):
        container = send(secret, cover, key, m)
        _, secret_out = receive(container, key, m)
        acc.append(mse_per_pixel(secret, secret_out))
out["receive_mse_trained"] = float(np.mean(mse_trained))
out["receive_mse_untrained"] = float(np.mean(mse_untrained))
out["receive_ratio"] = out["receive_mse_untrained"] / out["receive_mse_trained"]

# container resembles cover, not secret
mse_cc, mse_cs = [], []
for i in range(C6.pairs, total):
    cover, secret = images[i], images[i + total]
    key = pair_key(C6, i)
    container = send(secret, cover, key, model)
    mse_cc.append(mse_per_pixel(cover, container))
    mse_cs.append(mse_per_pixel(cover, secret))
out["send_cover_container_mse"] = float(np.mean(mse_cc))
out["send_cover_secret_mse"] = float(np.mean(mse_cs))

with open("/tmp/c6_report.json", "w") as fh:
    json.dump(out, fh, indent=1)
print("C6+C8 summary:", json.dumps(out, indent=1), flush=True)

# wrong-key reveal study
right = pair_key(C6, C6.pairs)
from stegocrypt.cipher import derive_key
wrong = derive_key(C6.cipher_seed + 12345, C6.grid_side)
wk_right, wk_wrong = [], []
for i in range(C6.pairs, total):
    cover, secret = images[i], images[i + total]
    container = send(secret, cover, right, model)
    _, s_right = receive(container, right, model)
    _, s_wrong = receive(container, wrong, model)
    wk_right.append(mse_per_pixel(secret, s_right))
    wk_wrong.append(mse_per_pixel(secret, s_wrong))
out["wrongkey_right"] = float(np.mean(wk_right))
out["wrongkey_wrong"] = float(np.mean(wk_wrong))

with open("/tmp/c6_report.json", "w") as fh:
    json.dump(out, fh, indent=1)

# criterion 7 sweep trial
sweep_base = TrainConfig(epochs=100, pairs=24, batch_size=8, image_size=16,
                         grid_side=2, cipher_seed=42, dataset_seed=7, init_seed=1)
t0 = time.time()
sweep = {}
for seed in (1, 2, 3):
    for beta in (0.25, 0.75, 1.0):
        cfg = replace(sweep_base, beta=beta, init_seed=seed, dataset_seed=100 + seed)
        rep = train(cfg)
        rec = rep.records[-1]
        sweep[f"s{seed}_b{beta}"] = (rec.cover_mse, rec.secret_mse)
        print(f"seed {seed} beta {beta}: cover={rec.cover_mse:.2f} secret={rec.secret_mse:.2f}",
              flush=True)
out["c7_minutes"] = (time.time() - t0) / 60
out["c7"] = sweep
for beta in (0.25, 0.75, 1.0):
    cov = np.mean([sweep[f"s{s}_b{beta}"][0] for s in (1, 2, 3)])
    sec = np.mean([sweep[f"s{s}_b{beta}"][1] for s in (1, 2, 3)])
    out[f"c7_mean_b{beta}"] = (float(cov), float(sec))

with open("/tmp/c6_report.json", "w") as fh:
    json.dump(out, fh, indent=1)
print("FULL summary:", json.dumps(out, indent=1), flush=True)
