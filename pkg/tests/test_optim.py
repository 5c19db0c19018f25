import math

import numpy as np
import pytest

from stegocrypt.autodiff import Tensor
from stegocrypt.errors import ShapeMismatchError
from stegocrypt.network import ParameterSet
from stegocrypt.optim import AdamConfig, AdamState, LossConfig, adam_step, joint_loss


def reference_adam(theta0, grad_fn, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar-loop reference of the moment updates, written independently.

    Epsilon sits inside the square root, matching the production update.
    Yields theta after every step.
    """
    theta = [float(v) for v in theta0]
    p = [0.0] * len(theta)
    q = [0.0] * len(theta)
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        for i in range(len(theta)):
            p[i] = b1 * p[i] + (1 - b1) * g[i]
            q[i] = b2 * q[i] + (1 - b2) * g[i] * g[i]
            p_hat = p[i] / (1 - b1 ** t)
            q_hat = q[i] / (1 - b2 ** t)
            theta[i] -= lr * p_hat / math.sqrt(q_hat + eps)
        yield list(theta)


def param_set(values, dtype=np.float64):
    ps = ParameterSet()
    ps.register("theta", Tensor(np.asarray(values, dtype=dtype)))
    return ps


class TestAdamConfig:
    def test_beta_bounds(self):
        with pytest.raises(ValueError):
            AdamConfig(beta1=1.0)
        with pytest.raises(ValueError):
            AdamConfig(beta2=-0.1)
        with pytest.raises(ValueError):
            AdamConfig(epsilon=0.0)


class TestAdamStep:
    def test_zero_gradients_leave_params_unchanged(self):
        ps = param_set([1.5, -2.0])
        state = AdamState(ps)
        adam_step(ps, {"theta": np.zeros(2)}, state, AdamConfig())
        assert np.array_equal(ps["theta"].data, [1.5, -2.0])
        assert state.t == 1

    def test_first_step_hand_value(self):
        ps = param_set([0.0])
        state = AdamState(ps)
        adam_step(ps, {"theta": np.ones(1)}, state, AdamConfig(learning_rate=1e-3))
        expected = -1e-3 * 1.0 / math.sqrt(1.0 + 1e-8)  # bias correction makes p=q=g
        assert ps["theta"].data[0] == pytest.approx(expected, abs=1e-12)

    def test_missing_gradient_rejected(self):
        ps = param_set([0.0])
        with pytest.raises(ValueError, match="missing gradients"):
            adam_step(ps, {}, AdamState(ps), AdamConfig())

    def test_degenerate_betas_give_sign_scaled_sgd(self):
        ps = param_set([2.0, -1.0])
        state = AdamState(ps)
        cfg = AdamConfig(learning_rate=0.1, beta1=0.0, beta2=0.0)
        g = np.array([0.5, -0.25])
        adam_step(ps, {"theta": g}, state, cfg)
        expected = np.array([2.0, -1.0]) - 0.1 * g / np.sqrt(g * g + cfg.epsilon)
        assert np.allclose(ps["theta"].data, expected, atol=1e-12)

    def test_first_step_magnitude_bounded_by_lr(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            start = rng.normal(size=4) * 10
            ps = param_set(start)
            g = rng.normal(size=4) * rng.choice([1e-4, 1e-2, 1.0, 100.0])
            adam_step(ps, {"theta": g}, AdamState(ps), AdamConfig(learning_rate=1e-3))
            assert np.all(np.abs(ps["theta"].data - start) <= 1e-3 + 1e-12)

    def test_second_moment_stays_nonnegative(self):
        ps = param_set([0.3, -0.7, 1.1])
        state = AdamState(ps)
        rng = np.random.default_rng(5)
        for _ in range(50):
            adam_step(ps, {"theta": rng.normal(size=3)}, state, AdamConfig())
            assert np.all(state.q["theta"] >= 0)

    def test_hundred_steps_match_reference(self):
        target = np.array([3.0, -1.0])
        ps = param_set([1.0, 1.0])
        state = AdamState(ps)
        cfg = AdamConfig()

        ref = reference_adam([1.0, 1.0],
                             lambda th: [2 * (th[0] - 3.0), 2 * (th[1] + 1.0)],
                             steps=100)
        for step, expected in enumerate(ref, start=1):
            g = 2.0 * (ps["theta"].data - target)
            adam_step(ps, {"theta": g}, state, cfg)
            assert np.max(np.abs(ps["theta"].data - expected)) <= 1e-6, f"step {step}"

    def test_quadratic_convergence_from_grid(self):
        # Canonical-default Adam needs ~3.1-3.7k steps from the far corners
        # of [-10,10]^2 (the first-step bound is lr, so covering distance
        # ~12 alone costs >1200 steps, then the moment memory rings).
        target = np.array([1.0, -2.0])
        starts = [(-10, -10), (10, 10), (-10, 10), (10, -10), (0.0, 9.5), (-7.5, 0.5)]
        for start in starts:
            ps = param_set(start)
            state = AdamState(ps)
            cfg = AdamConfig(learning_rate=0.01)
            for _ in range(4000):
                g = 2.0 * (ps["theta"].data - target)
                adam_step(ps, {"theta": g}, state, cfg)
            assert np.max(np.abs(ps["theta"].data - target)) < 1e-3, start

    def test_moderate_starts_converge_within_2000_steps(self):
        target = np.zeros(2)
        for start in [(5.0, -5.0), (-3.0, 4.0), (2.0, 2.0)]:
            ps = param_set(start)
            state = AdamState(ps)
            for _ in range(2000):
                g = 2.0 * ps["theta"].data
                adam_step(ps, {"theta": g}, state, AdamConfig(learning_rate=0.01))
            assert np.max(np.abs(ps["theta"].data)) < 1e-3, start


class TestJointLoss:
    def _tensors(self, *arrays):
        return [Tensor(np.asarray(a, dtype=np.float32)) for a in arrays]

    def test_perfect_reconstruction_is_zero(self):
        c, cp, s, sp = self._tensors([0.5], [0.5], [0.25], [0.25])
        loss, gc, gs = joint_loss(c, cp, s, sp, LossConfig(1.0))
        assert loss == 0.0
        assert not gc.data.any() and not gs.data.any()

    def test_beta_zero_is_cover_term_only(self):
        c, cp, s, sp = self._tensors([0.0], [1.0], [0.0], [5.0])
        loss, _, gs = joint_loss(c, cp, s, sp, LossConfig(0.0))
        assert loss == pytest.approx(1.0)
        assert not gs.data.any()

    def test_hand_value(self):
        c, cp, s, sp = self._tensors([0.0], [1.0], [0.0], [2.0])
        loss, _, _ = joint_loss(c, cp, s, sp, LossConfig(0.75))
        assert loss == pytest.approx(1.0 + 0.75 * 4.0)

    def test_linear_in_beta(self):
        rng = np.random.default_rng(8)
        c, cp, s, sp = self._tensors(*(rng.random((3, 3, 1)) for _ in range(4)))
        loss_a = joint_loss(c, cp, s, sp, LossConfig(0.25))[0]
        loss_b = joint_loss(c, cp, s, sp, LossConfig(1.25))[0]
        from stegocrypt.autodiff import mse_and_grad
        secret_mse = mse_and_grad(sp, s)[0]
        assert (loss_b - loss_a) / 1.0 == pytest.approx(secret_mse, rel=1e-6)

    def test_nonnegative(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            c, cp, s, sp = self._tensors(*(rng.random(4) for _ in range(4)))
            assert joint_loss(c, cp, s, sp, LossConfig(rng.random() * 2))[0] >= 0.0

    def test_shape_mismatch_rejected(self):
        c, cp, s = self._tensors([0.0], [1.0], [0.0])
        sp = Tensor(np.zeros((2,), dtype=np.float32))
        with pytest.raises(ShapeMismatchError):
            joint_loss(c, cp, s, sp, LossConfig(1.0))

    def test_beta_validation(self):
        with pytest.raises(ValueError):
            LossConfig(-0.5)
