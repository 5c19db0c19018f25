"""The hide/reveal networks: parameter arithmetic and a gradient check.

Builds the encoder (prep + hiding stages) and decoder (reveal stages),
prints the layer-by-layer parameter budget, and spot-checks one backprop
gradient against central finite differences.
"""
import numpy as np

from stegocrypt import (LossConfig, Tape, Tensor, build_decoder, build_encoder,
                        forward_decoder, forward_encoder, joint_loss)

enc_graph, enc_params = build_encoder(3, rng=0)
dec_graph, dec_params = build_decoder(3, rng=1)

print("encoder parameters by stage:")
stage_totals = {}
for name, tensor in enc_params.items():
    stage = name.split(".")[0].rsplit("_", 1)[0] if "conv_" in name else name.split(".")[0]
    stage_totals[stage] = stage_totals.get(stage, 0) + tensor.size
for stage, count in stage_totals.items():
    print(f"  {stage:<12} {count:>8,}")
print(f"  {'total':<12} {enc_params.total_count():>8,}")
print(f"decoder total: {dec_params.total_count():,}")
print(f"combined:      {enc_params.total_count() + dec_params.total_count():,}\n")

# Gradient spot check on a miniature 8x8 problem (float64 for a clean probe).
enc_graph, enc_params = build_encoder(3, rng=np.random.default_rng(2), dtype=np.float64)
dec_graph, dec_params = build_decoder(3, noise_stddev=0.0,
                                      rng=np.random.default_rng(3), dtype=np.float64)
rng = np.random.default_rng(4)
secret, cover = Tensor(rng.random((8, 8, 3))), Tensor(rng.random((8, 8, 3)))
cfg = LossConfig(1.0)

tape = Tape()
container = forward_encoder(enc_graph, enc_params, secret, cover, tape)
revealed = forward_decoder(dec_graph, dec_params, container, mode="eval", tape=tape)
loss, g_container, g_revealed = joint_loss(cover, container, secret, revealed, cfg)
container.accumulate_grad(g_container.data)
revealed.accumulate_grad(g_revealed.data)
tape.backward()

weight = enc_params["conv_hid2_3x3.weight"]
idx = (1, 1, 7, 7)
analytic = weight.grad[idx]

def loss_at():
    c = forward_encoder(enc_graph, enc_params, secret, cover)
    r = forward_decoder(dec_graph, dec_params, c, mode="eval")
    return joint_loss(cover, c, secret, r, cfg)[0]

h = 1e-5
orig = weight.data[idx]
weight.data[idx] = orig + h
fp = loss_at()
weight.data[idx] = orig - h
fm = loss_at()
weight.data[idx] = orig
fd = (fp - fm) / (2 * h)
print(f"loss = {loss:.6f}")
print(f"d loss / d conv_hid2_3x3.weight{idx}: backprop {analytic:.8f} "
      f"vs finite difference {fd:.8f}")
