"""Adam optimizer and the joint cover/secret reconstruction loss.

The update keeps exponential moving averages of the gradient (p) and the
squared gradient (q), corrects both for initialization bias, and steps

    theta <- theta - lr * p_hat / sqrt(q_hat + eps)

with eps inside the square root. The loss is MSE(cover, container) +
beta * MSE(secret, revealed); both terms are mean-reduced so beta has the
same meaning regardless of image size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .autodiff import Tensor, mse_and_grad
from .errors import ShapeMismatchError
from .network import ParameterSet

__all__ = ["AdamConfig", "AdamState", "LossConfig", "adam_step", "joint_loss"]


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"beta1/beta2 must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


class AdamState:
    """Per-parameter first/second moment buffers and a shared step counter."""

    def __init__(self, params: ParameterSet):
        self.p = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.q = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.t = 0


def adam_step(params: ParameterSet, grads: Mapping[str, np.ndarray],
              state: AdamState, config: AdamConfig) -> None:
    """Apply one Adam update in place to every registered parameter."""
    missing = [name for name in params.names() if grads.get(name) is None]
    if missing:
        raise ValueError(f"missing gradients for parameters: {missing[:5]}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, tensor in params.items():
        g = grads[name]
        p = state.p[name]
        q = state.q[name]
        p *= b1
        p += (1.0 - b1) * g
        q *= b2
        q += (1.0 - b2) * (g * g)
        p_hat = p / bc1
        q_hat = q / bc2
        tensor.data -= config.learning_rate * p_hat / np.sqrt(q_hat + config.epsilon)


@dataclass
class LossConfig:
    """Weight of the secret-reconstruction term."""

    beta: float = 1.0

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


def joint_loss(cover: Tensor, container: Tensor, secret: Tensor, revealed: Tensor,
               config: LossConfig) -> tuple[float, Tensor, Tensor]:
    """Total loss plus gradients w.r.t. the container and revealed tensors."""
    if cover.shape != container.shape:
        raise ShapeMismatchError(f"cover shape {cover.shape} != container shape {container.shape}")
    if secret.shape != revealed.shape:
        raise ShapeMismatchError(f"secret shape {secret.shape} != revealed shape {revealed.shape}")
    cover_mse, g_container = mse_and_grad(container, cover)
    secret_mse, g_revealed = mse_and_grad(revealed, secret)
    g_revealed.data *= config.beta
    return cover_mse + config.beta * secret_mse, g_container, g_revealed
