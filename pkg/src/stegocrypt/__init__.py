"""Encrypted deep steganography: block-scrambling cipher + hide/reveal CNNs."""

from .autodiff import Tape, Tensor, concat_channels, conv2d, gaussian_noise, mse_and_grad, relu
from .checkpoint import deserialize_checkpoint, serialize_checkpoint
from .cipher import (PermutationKey, SplitMix64, brute_force_years, decrypt,
                     derive_key, encrypt, format_key_file, keyspace, parse_key_file)
from .errors import ConfigError, FormatError, NumericFailure, ShapeMismatchError
from .imaging import (ImageBuffer, MetricsRecord, adjacent_correlation, histogram,
                      image_similarity, mean_abs_adjacent_correlation, mse_per_pixel,
                      read_ppm, residual_enhance, resize_nearest, synth_dataset,
                      to_grayscale, write_metrics_csv, write_ppm)
from .network import (LayerGraph, ParameterSet, build_decoder, build_encoder,
                      forward_decoder, forward_encoder)
from .optim import AdamConfig, AdamState, LossConfig, adam_step, joint_loss
from .pipeline import (StegoModel, SweepRow, TrainConfig, TrainReport, beta_sweep,
                       build_model, format_train_config, load_model, moving_average,
                       pair_key, parse_train_config, receive, residual_attack, send,
                       train)

__version__ = "0.1.0"
