"""Train a small hide/reveal model end to end (about a minute on one core).

Writes the checkpoint and the per-epoch metrics CSV that later demos reuse.
"""
import pathlib

from stegocrypt import AdamConfig, TrainConfig, train, write_metrics_csv

out = pathlib.Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

config = TrainConfig(beta=1.0, epochs=60, pairs=16, batch_size=8, image_size=16,
                     grid_side=2, cipher_seed=42, dataset_seed=7, init_seed=1,
                     adam=AdamConfig(learning_rate=1e-3))

print(f"training: {config.epochs} epochs, {config.pairs} pairs of "
      f"{config.image_size}x{config.image_size} images, beta={config.beta}")
report = train(config, on_epoch=lambda r: print(
    f"  epoch {r.epoch:>3}: encode_loss={r.encode_loss:.5f} "
    f"cover_mse={r.cover_mse:7.1f} secret_mse={r.secret_mse:7.1f}")
    if r.epoch % 10 == 0 else None)

(out / "toy.sgn").write_bytes(report.checkpoint)
(out / "toy_metrics.csv").write_text(write_metrics_csv(report.records))
(out / "toy.cfg").write_text(__import__("stegocrypt").format_train_config(config))

first, last = report.records[0], report.records[-1]
print(f"\ndone in {report.duration_seconds:.0f}s; encode_loss "
      f"{first.encode_loss:.4f} -> {last.encode_loss:.4f}")
print(f"checkpoint: {out / 'toy.sgn'} ({len(report.checkpoint):,} bytes)")
print(f"metrics:    {out / 'toy_metrics.csv'}")
