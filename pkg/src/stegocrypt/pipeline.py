"""End-to-end pipeline: cipher + encoder/decoder, training, and studies.

Sending scrambles the secret with the block cipher, feeds it with the cover
through the encoder, and byte-quantizes the container. Receiving runs the
decoder in eval mode on the quantized container and unscrambles the result.
During training the float container feeds the decoder directly so gradients
flow end to end; the decoder's noise layer stands in for quantization error.

Training is deterministic for a fixed config: dataset, weight init, batch
order, and noise draws all come from seeded generators, and gradients are
reduced in a fixed order, so reruns produce bit-identical checkpoints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .autodiff import Tape, Tensor, tune_allocator
from .checkpoint import (deserialize_checkpoint, restore_parameters,
                         serialize_checkpoint)
from .cipher import PermutationKey, decrypt, derive_key, encrypt
from .errors import ConfigError, NumericFailure, ShapeMismatchError
from .imaging import (ImageBuffer, MetricsRecord, image_similarity,
                      mean_abs_adjacent_correlation, residual_enhance,
                      synth_dataset, to_grayscale)
from .network import (LayerGraph, ParameterSet, build_decoder, build_encoder,
                      forward_decoder, forward_encoder)
from .optim import AdamConfig, AdamState, LossConfig, adam_step, joint_loss

__all__ = [
    "TrainConfig",
    "TrainReport",
    "StegoModel",
    "SweepRow",
    "build_model",
    "load_model",
    "send",
    "receive",
    "train",
    "beta_sweep",
    "residual_attack",
    "pair_key",
    "parse_train_config",
    "format_train_config",
    "moving_average",
]

KEY_POLICIES = ("fixed", "per_pair")
DATASET_KINDS = ("gradients", "shapes", "texture", "mixed")


@dataclass
class TrainConfig:
    """Everything a training run depends on.

    ``pairs`` counts training pairs; a further ``pairs // 4`` pairs are
    generated and held out (the last 20% of the dataset), never trained on,
    and used for per-epoch metrics. Every random choice derives from the
    three seeds, so identical configs give bit-identical runs.
    """

    beta: float = 1.0
    adam: AdamConfig = field(default_factory=AdamConfig)
    epochs: int = 10
    batch_size: int = 8
    image_size: int = 32
    grid_side: int = 2
    cipher_seed: int = 42
    key_policy: str = "fixed"
    dataset_seed: int = 7
    pairs: int = 16
    dataset_kind: str = "mixed"
    init_seed: int = 1
    noise_stddev: float = 0.01
    checkpoint_every: int = 0

    def validate(self) -> None:
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.pairs < 1:
            raise ConfigError(f"pairs must be >= 1, got {self.pairs}")
        if self.grid_side < 1:
            raise ConfigError(f"grid_side must be >= 1, got {self.grid_side}")
        if self.image_size % self.grid_side:
            raise ConfigError(f"image_size {self.image_size} is not divisible by "
                              f"grid_side {self.grid_side}")
        if self.key_policy not in KEY_POLICIES:
            raise ConfigError(f"key_policy must be one of {KEY_POLICIES}, got {self.key_policy!r}")
        if self.dataset_kind not in DATASET_KINDS:
            raise ConfigError(f"dataset_kind must be one of {DATASET_KINDS}, "
                              f"got {self.dataset_kind!r}")
        if self.noise_stddev < 0:
            raise ConfigError(f"noise_stddev must be >= 0, got {self.noise_stddev}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")

    @property
    def holdout_pairs(self) -> int:
        return self.pairs // 4

    @property
    def total_pairs(self) -> int:
        return self.pairs + self.holdout_pairs


@dataclass
class TrainReport:
    records: list[MetricsRecord]
    checkpoint: bytes
    duration_seconds: float
    model: "StegoModel"


@dataclass
class SweepRow:
    beta: float
    cover_mse: float
    secret_mse: float


@dataclass
class StegoModel:
    """Encoder + decoder graphs sharing one parameter registry."""

    channels: int
    noise_stddev: float
    encoder: LayerGraph
    encoder_params: ParameterSet
    decoder: LayerGraph
    decoder_params: ParameterSet
    params: ParameterSet


def build_model(channels: int = 3, noise_stddev: float = 0.01, init_seed: int = 0) -> StegoModel:
    enc_graph, enc_params = build_encoder(channels, rng=np.random.default_rng([init_seed, 0]))
    dec_graph, dec_params = build_decoder(channels, noise_stddev,
                                          rng=np.random.default_rng([init_seed, 1]))
    return StegoModel(channels=channels, noise_stddev=noise_stddev,
                      encoder=enc_graph, encoder_params=enc_params,
                      decoder=dec_graph, decoder_params=dec_params,
                      params=ParameterSet.union(enc_params, dec_params))


def load_model(checkpoint: bytes, noise_stddev: float = 0.01) -> StegoModel:
    """Rebuild a model from checkpoint bytes (optimizer tensors ignored)."""
    tensors, _ = deserialize_checkpoint(checkpoint)
    if "output_C.bias" not in tensors:
        raise ConfigError("checkpoint does not contain an encoder (output_C.bias missing)")
    channels = tensors["output_C.bias"].shape[0]
    model = build_model(channels, noise_stddev, init_seed=0)
    restore_parameters(model.params, tensors)
    return model


def pair_key(config: TrainConfig, pair_index: int) -> PermutationKey:
    """The cipher key for one pair under the configured key policy."""
    if config.key_policy == "fixed":
        return derive_key(config.cipher_seed, config.grid_side)
    return derive_key((config.cipher_seed + pair_index) & ((1 << 64) - 1), config.grid_side)


# ---------------------------------------------------------------------------
# Sender / receiver blocks

def send(secret: ImageBuffer, cover: ImageBuffer, key: PermutationKey | None,
         model: StegoModel) -> ImageBuffer:
    """Scramble the secret (if a key is given), hide it, quantize to bytes."""
    if secret.pixels.shape != cover.pixels.shape:
        raise ShapeMismatchError(f"secret {secret.pixels.shape} and cover "
                                 f"{cover.pixels.shape} must match")
    payload = encrypt(secret, key) if key is not None else secret
    container = forward_encoder(model.encoder, model.encoder_params,
                                Tensor(payload.to_float()), Tensor(cover.to_float()))
    return ImageBuffer.from_float(container.data)


def receive(container: ImageBuffer, key: PermutationKey,
            model: StegoModel) -> tuple[ImageBuffer, ImageBuffer]:
    """Reveal the scrambled secret, then unscramble it."""
    revealed = forward_decoder(model.decoder, model.decoder_params,
                               Tensor(container.to_float()), mode="eval")
    revealed_img = ImageBuffer.from_float(revealed.data)
    return revealed_img, decrypt(revealed_img, key)


# ---------------------------------------------------------------------------
# Training

def _quantize_batch(arr: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def train_step(model: StegoModel, state: AdamState, cover_batch: np.ndarray,
               secret_batch: np.ndarray, loss_cfg: LossConfig, adam_cfg: AdamConfig,
               noise_rng: np.random.Generator) -> float:
    """One optimization step over a [B,H,W,C] float batch; leaves grads set."""
    model.params.zero_grads()
    tape = Tape()
    cover_t = Tensor(cover_batch)
    secret_t = Tensor(secret_batch)
    container = forward_encoder(model.encoder, model.encoder_params, secret_t, cover_t, tape)
    revealed = forward_decoder(model.decoder, model.decoder_params, container,
                               mode="train", tape=tape, rng=noise_rng)
    loss, g_container, g_revealed = joint_loss(cover_t, container, secret_t, revealed, loss_cfg)
    container.accumulate_grad(g_container.data)
    revealed.accumulate_grad(g_revealed.data)
    tape.backward()
    adam_step(model.params, model.params.gradients(), state, adam_cfg)
    return loss


def _evaluate(model: StegoModel, covers: np.ndarray, secrets_enc: np.ndarray,
              beta: float, epoch: int) -> MetricsRecord:
    """Eval-mode metrics on byte-quantized outputs.

    The secret-side MSE is computed against the scrambled secret, which
    equals the MSE between the unscrambled output and the original secret
    because the permutation only relocates pixels.
    """
    container = forward_encoder(model.encoder, model.encoder_params,
                                Tensor(secrets_enc), Tensor(covers))
    container_q = _quantize_batch(container.data)
    revealed = forward_decoder(model.decoder, model.decoder_params,
                               Tensor(container_q.astype(np.float32) / np.float32(255.0)),
                               mode="eval")
    revealed_q = _quantize_batch(revealed.data)

    cover_b = _quantize_batch(covers)
    secret_b = _quantize_batch(secrets_enc)
    cover_mse = float(np.mean((cover_b.astype(np.float64) - container_q) ** 2))
    secret_mse = float(np.mean((secret_b.astype(np.float64) - revealed_q) ** 2))
    encode_loss = cover_mse / 255.0 ** 2 + beta * secret_mse / 255.0 ** 2
    reveal_loss = beta * secret_mse / 255.0 ** 2
    corr = float(np.mean([mean_abs_adjacent_correlation(ImageBuffer(img))
                          for img in container_q]))
    return MetricsRecord(epoch=epoch, encode_loss=encode_loss, reveal_loss=reveal_loss,
                         cover_mse=cover_mse, secret_mse=secret_mse, container_corr=corr)


def train(config: TrainConfig, on_epoch=None, checkpoint_path=None) -> TrainReport:
    """Run the full training loop described in the module docstring.

    With ``checkpoint_every > 0`` and a ``checkpoint_path``, the current
    weights and optimizer state are written there every N epochs (and the
    final state at the end either way).
    """
    config.validate()
    tune_allocator()
    started = time.perf_counter()

    total = config.total_pairs
    images = synth_dataset(config.dataset_seed, 2 * total, config.image_size,
                           config.dataset_kind)
    covers = [images[i] for i in range(total)]
    secrets = [images[i + total] for i in range(total)]
    keys = [pair_key(config, i) for i in range(total)]
    secrets_enc = [encrypt(secrets[i], keys[i]) for i in range(total)]

    covers_f = np.stack([img.to_float() for img in covers])
    secrets_f = np.stack([img.to_float() for img in secrets_enc])
    n_train = config.pairs
    eval_slice = slice(n_train, total) if config.holdout_pairs else slice(0, n_train)

    model = build_model(3, config.noise_stddev, config.init_seed)
    state = AdamState(model.params)
    loss_cfg = LossConfig(config.beta)
    shuffle_rng = np.random.default_rng([config.init_seed, 2])
    noise_rng = np.random.default_rng([config.init_seed, 3])

    records: list[MetricsRecord] = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = train_step(model, state, covers_f[idx], secrets_f[idx],
                              loss_cfg, config.adam, noise_rng)
            if not np.isfinite(loss):
                raise NumericFailure(f"non-finite loss at epoch {epoch}, "
                                     f"batch {start // config.batch_size}")
        record = _evaluate(model, covers_f[eval_slice], secrets_f[eval_slice],
                           config.beta, epoch)
        records.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if (checkpoint_path is not None and config.checkpoint_every
                and epoch % config.checkpoint_every == 0 and epoch != config.epochs):
            with open(checkpoint_path, "wb") as fh:
                fh.write(serialize_checkpoint(model.params, adam_state=state))

    blob = serialize_checkpoint(model.params, adam_state=state)
    if checkpoint_path is not None:
        with open(checkpoint_path, "wb") as fh:
            fh.write(blob)
    return TrainReport(records=records, checkpoint=blob,
                       duration_seconds=time.perf_counter() - started, model=model)


def beta_sweep(base: TrainConfig, betas: list[float]) -> list[SweepRow]:
    """Train one run per beta (same seeds otherwise); held-out metrics."""
    if len(betas) < 2:
        raise ConfigError("beta_sweep needs at least two beta values")
    rows = []
    for beta in betas:
        report = train(replace(base, beta=float(beta)))
        final = report.records[-1]
        rows.append(SweepRow(beta=float(beta), cover_mse=final.cover_mse,
                             secret_mse=final.secret_mse))
    return rows


def residual_attack(secret: ImageBuffer, cover: ImageBuffer,
                    key: PermutationKey | None,
                    model: StegoModel) -> tuple[ImageBuffer, float]:
    """Recover what leaks from |cover - container| when the cover is known.

    With ``key=None`` the secret is embedded unscrambled, modeling a pipeline
    without the encryption layer. Returns the enhanced residual and its
    Pearson similarity to the grayscale secret.
    """
    container = send(secret, cover, key, model)
    residual = residual_enhance(cover, container)
    return residual, image_similarity(residual, to_grayscale(secret))


# ---------------------------------------------------------------------------
# Flat key=value config files

_ADAM_KEYS = {"learning_rate": "learning_rate", "adam_beta1": "beta1",
              "adam_beta2": "beta2", "adam_epsilon": "epsilon"}
_INT_KEYS = {"epochs", "batch_size", "image_size", "grid_side", "cipher_seed",
             "dataset_seed", "pairs", "init_seed", "checkpoint_every"}
_FLOAT_KEYS = {"beta", "noise_stddev"}
_STR_KEYS = {"key_policy", "dataset_kind"}


def parse_train_config(text: str) -> TrainConfig:
    """Parse "key=value" lines (# comments allowed) into a TrainConfig."""
    kwargs = {}
    adam_kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _STR_KEYS:
            kwargs[key] = value
            continue
        if key not in _ADAM_KEYS and key not in _INT_KEYS and key not in _FLOAT_KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            if key in _ADAM_KEYS:
                adam_kwargs[_ADAM_KEYS[key]] = float(value)
            elif key in _INT_KEYS:
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key!r}") from None
    try:
        config = TrainConfig(adam=AdamConfig(**adam_kwargs), **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    config.validate()
    return config


def format_train_config(config: TrainConfig) -> str:
    lines = []
    for f in fields(TrainConfig):
        if f.name == "adam":
            lines.append(f"learning_rate={config.adam.learning_rate!r}")
            lines.append(f"adam_beta1={config.adam.beta1!r}")
            lines.append(f"adam_beta2={config.adam.beta2!r}")
            lines.append(f"adam_epsilon={config.adam.epsilon!r}")
        else:
            lines.append(f"{f.name}={getattr(config, f.name)}")
    return "\n".join(lines) + "\n"


def moving_average(values, window: int = 10) -> np.ndarray:
    """Trailing moving average; the first window-1 entries use what exists."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    for i in range(len(values)):
        out[i] = values[max(0, i - window + 1):i + 1].mean()
    return out
