"""Dense float tensors with reverse-mode differentiation on an explicit tape.

All image-shaped tensors are laid out channel-innermost: ``[H, W, C]`` or
``[N, H, W, C]`` with an optional leading batch axis. Convolutions are
cross-correlations (no kernel flip) at stride 1 with "same" padding, so
spatial extents never change. Even kernel sizes pad asymmetrically:
``(k - 1) // 2`` rows/cols before, the remainder after.

A :class:`Tape` records one :class:`TapeNode` per forward op, in forward
order. ``Tape.backward()`` walks the nodes in exact reverse and accumulates
into each tensor's ``grad`` buffer, so gradient reduction order is fixed and
runs are reproducible.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeMismatchError

__all__ = [
    "Tensor",
    "Tape",
    "TapeNode",
    "conv2d",
    "multi_conv2d",
    "relu",
    "concat_channels",
    "gaussian_noise",
    "mse_and_grad",
    "same_pads",
    "tune_allocator",
]


def tune_allocator() -> None:
    """Raise glibc's mmap/trim thresholds so large scratch buffers get reused.

    Convolution scratch alternates many multi-MB allocations; with glibc's
    default 128 KiB mmap threshold each one round-trips through mmap/munmap
    and page faults dominate. Safe to call repeatedly; a no-op off glibc.
    """
    import ctypes

    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except (OSError, AttributeError):  # pragma: no cover
        pass


class Tensor:
    """An N-d float array plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):  # pragma: no cover
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name})"


class TapeNode:
    """One recorded op: kind tag, operand refs, and a bound backward rule."""

    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor,
                 backward_fn: Callable[[np.ndarray], None]):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Forward-ordered op record; backward() replays it in exact reverse."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def record(self, op, inputs, output, backward_fn) -> None:
        self.nodes.append(TapeNode(op, inputs, output, backward_fn))

    def backward(self) -> None:
        """Propagate output grads back to every recorded input.

        Seed the grads of the terminal tensors before calling. Nodes whose
        output never received a gradient are skipped. The tape is cleared
        afterwards, releasing saved activations.
        """
        for node in reversed(self.nodes):
            g = node.output.grad
            if g is not None:
                node.backward_fn(g)
            node.backward_fn = None
        self.nodes.clear()


def same_pads(k: int) -> tuple[int, int]:
    """Per-axis (before, after) padding that preserves extent at stride 1."""
    before = (k - 1) // 2
    return before, k - 1 - before


def _as_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeMismatchError(f"expected rank-3 [H,W,C] or rank-4 [N,H,W,C] input, got shape {x.shape}")


def _padded(x: np.ndarray, pbh: int, pah: int, pbw: int, paw: int) -> np.ndarray:
    n, h, w, c = x.shape
    xp = np.zeros((n, h + pbh + pah, w + pbw + paw, c), dtype=x.dtype)
    xp[:, pbh:pbh + h, pbw:pbw + w, :] = x
    return xp


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, tape: Tape | None = None) -> Tensor:
    """Stride-1 same-padding cross-correlation.

    ``x`` is [H,W,Cin] or [N,H,W,Cin]; ``weight`` is [kH,kW,Cin,Cout];
    ``bias`` is [Cout]. Output spatial extents equal the input's.

    Computed as one GEMM per kernel offset over the zero-padded input;
    summing offset contributions is algebraically the direct convolution.
    """
    if weight.data.ndim != 4:
        raise ShapeMismatchError(f"weight must be [kH,kW,Cin,Cout], got shape {weight.shape}")
    kh, kw, cin, cout = weight.shape
    if bias.shape != (cout,):
        raise ShapeMismatchError(f"bias shape {bias.shape} does not match Cout={cout}")
    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    if c != cin:
        raise ShapeMismatchError(
            f"input has {c} channels but weights expect Cin={cin} "
            f"(input shape {x.shape}, weight shape {weight.shape})")

    pbh, pah = same_pads(kh)
    pbw, paw = same_pads(kw)
    xp = _padded(xb, pbh, pah, pbw, paw)
    m = n * h * w
    out = np.empty((m, cout), dtype=xb.dtype)
    out[:] = bias.data
    tmp = np.empty((m, cout), dtype=xb.dtype)
    slices: list[np.ndarray] = []
    for di in range(kh):
        for dj in range(kw):
            sl = np.ascontiguousarray(xp[:, di:di + h, dj:dj + w, :]).reshape(m, cin)
            np.matmul(sl, weight.data[di, dj], out=tmp)
            out += tmp
            if tape is not None:
                slices.append(sl)
    out = out.reshape(n, h, w, cout)
    result = Tensor(out[0] if squeeze else out)

    if tape is not None:
        def backward(upstream: np.ndarray) -> None:
            up = upstream[None] if squeeze else upstream
            upmat = up.reshape(m, cout)
            bias.accumulate_grad(upmat.sum(axis=0))
            wgrad = np.empty_like(weight.data)
            gxp = np.zeros((n, h + pbh + pah, w + pbw + paw, cin), dtype=xb.dtype)
            gtmp = np.empty((m, cin), dtype=xb.dtype)
            for di in range(kh):
                for dj in range(kw):
                    sl = slices[di * kw + dj]
                    np.matmul(sl.T, upmat, out=wgrad[di, dj])
                    # Each output position feeds x shifted by this offset.
                    np.matmul(upmat, weight.data[di, dj].T, out=gtmp)
                    gxp[:, di:di + h, dj:dj + w, :] += gtmp.reshape(n, h, w, cin)
            weight.accumulate_grad(wgrad)
            gx = gxp[:, pbh:pbh + h, pbw:pbw + w, :]
            x.accumulate_grad(gx[0] if squeeze else gx)

        tape.record("conv2d", (x, weight, bias), result, backward)
    return result


def multi_conv2d(x: Tensor, weights: Sequence[Tensor], biases: Sequence[Tensor],
                 tape: Tape | None = None) -> Tensor:
    """Fused concat of parallel same-padding convs over a shared input.

    Equivalent to ``concat_channels([conv2d(x, w_b, b_b) for b ...])`` with
    kernel sizes in ascending order. Smaller kernels' offset windows nest
    inside larger ones, so the participating branches at any offset form a
    contiguous column suffix and each offset needs just one GEMM over the
    shared input slice.
    """
    if not weights or len(weights) != len(biases):
        raise ShapeMismatchError("multi_conv2d needs matching weight/bias lists")
    kernels = []
    cin = weights[0].shape[2]
    for wt, bs in zip(weights, biases):
        kh, kw, ci, co = wt.shape
        if ci != cin:
            raise ShapeMismatchError("multi_conv2d branches must share input channels")
        if bs.shape != (co,):
            raise ShapeMismatchError(f"bias shape {bs.shape} does not match Cout={co}")
        kernels.append((kh, kw, co))
    for (kh0, kw0, _), (kh1, kw1, _) in zip(kernels, kernels[1:]):
        if kh1 < kh0 or kw1 < kw0:
            raise ShapeMismatchError("multi_conv2d kernels must be in ascending size order")

    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    if c != cin:
        raise ShapeMismatchError(f"input has {c} channels but weights expect Cin={cin}")

    max_kh, max_kw, _ = kernels[-1]
    pbh, pah = same_pads(max_kh)
    pbw, paw = same_pads(max_kw)
    xp = _padded(xb, pbh, pah, pbw, paw)
    m = n * h * w
    spans = np.concatenate([[0], np.cumsum([co for _, _, co in kernels])])
    total = int(spans[-1])

    # Offset plan: for padded-grid offset (si, sj), the branches whose window
    # covers it (a suffix), their per-branch kernel indices, and the output
    # column where their concatenated contribution starts.
    plan = []
    for si in range(max_kh):
        for sj in range(max_kw):
            entries = []
            for b, (kh, kw, _) in enumerate(kernels):
                ui = si - (pbh - same_pads(kh)[0])
                uj = sj - (pbw - same_pads(kw)[0])
                if 0 <= ui < kh and 0 <= uj < kw:
                    entries.append((b, ui, uj))
            if entries:
                plan.append((si, sj, entries, int(spans[entries[0][0]])))

    bias_cat = np.concatenate([bs.data for bs in biases])
    out = np.empty((m, total), dtype=xb.dtype)
    out[:] = bias_cat
    slices: list[np.ndarray] = []
    scratch = np.empty(m * total, dtype=xb.dtype)
    sl_buf = None if tape is not None else np.empty((n, h, w, cin), dtype=xb.dtype)
    for si, sj, entries, lo in plan:
        if tape is not None:
            sl = np.ascontiguousarray(xp[:, si:si + h, sj:sj + w, :]).reshape(m, cin)
            slices.append(sl)
        else:
            np.copyto(sl_buf, xp[:, si:si + h, sj:sj + w, :])
            sl = sl_buf.reshape(m, cin)
        wcat = np.concatenate([weights[b].data[ui, uj] for b, ui, uj in entries], axis=1)
        tmp = scratch[:m * (total - lo)].reshape(m, total - lo)
        np.matmul(sl, wcat, out=tmp)
        out[:, lo:] += tmp
    result = Tensor(out.reshape(n, h, w, total)[0] if squeeze
                    else out.reshape(n, h, w, total))

    if tape is not None:
        def backward(upstream: np.ndarray) -> None:
            up = upstream[None] if squeeze else upstream
            upmat = np.ascontiguousarray(up.reshape(m, total))
            for b, bs in enumerate(biases):
                bs.accumulate_grad(upmat[:, spans[b]:spans[b + 1]].sum(axis=0))
            wgrads = [np.empty_like(wt.data) for wt in weights]
            gxp = np.zeros_like(xp)
            chunk = np.empty(cin * total, dtype=xb.dtype)
            gscratch = np.empty(m * cin, dtype=xb.dtype)
            for idx, (si, sj, entries, lo) in enumerate(plan):
                sl = slices[idx]
                up_part = upmat if lo == 0 else np.ascontiguousarray(upmat[:, lo:])
                cview = chunk[:cin * (total - lo)].reshape(cin, total - lo)
                np.matmul(sl.T, up_part, out=cview)
                col = 0
                for b, ui, uj in entries:
                    width = kernels[b][2]
                    wgrads[b][ui, uj] = cview[:, col:col + width]
                    col += width
                wcat = np.concatenate([weights[b].data[ui, uj] for b, ui, uj in entries], axis=1)
                gtmp = gscratch.reshape(m, cin)
                np.matmul(up_part, wcat.T, out=gtmp)
                gxp[:, si:si + h, sj:sj + w, :] += gtmp.reshape(n, h, w, cin)
            for wt, wg in zip(weights, wgrads):
                wt.accumulate_grad(wg)
            gx = gxp[:, pbh:pbh + h, pbw:pbw + w, :]
            x.accumulate_grad(gx[0] if squeeze else gx)

        tape.record("multi_conv2d", (x, *weights, *biases), result, backward)
    return result


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise max(0, x); backward passes upstream where x > 0."""
    out = Tensor(np.maximum(x.data, 0))
    if tape is not None:
        mask = x.data > 0

        def backward(upstream: np.ndarray) -> None:
            x.accumulate_grad(upstream * mask)

        tape.record("relu", (x,), out, backward)
    return out


def concat_channels(parts: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    """Concatenate along the channel (innermost) axis; backward splits."""
    if not parts:
        raise ShapeMismatchError("concat_channels needs at least one part")
    spatial = parts[0].data.shape[:-1]
    for p in parts[1:]:
        if p.data.shape[:-1] != spatial:
            raise ShapeMismatchError(
                f"concat parts disagree on spatial dims: {parts[0].shape} vs {p.shape}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=-1))
    if tape is not None:
        widths = [p.data.shape[-1] for p in parts]

        def backward(upstream: np.ndarray) -> None:
            lo = 0
            for p, width in zip(parts, widths):
                p.accumulate_grad(upstream[..., lo:lo + width])
                lo += width

        tape.record("concat", tuple(parts), out, backward)
    return out


def gaussian_noise(x: Tensor, stddev: float, mode: str = "train",
                   rng: np.random.Generator | None = None,
                   tape: Tape | None = None) -> Tensor:
    """Additive i.i.d. normal noise in train mode; identity in eval mode.

    Backward is the identity in both modes. With ``stddev == 0`` no draw is
    made and the output is bit-identical to the input.
    """
    if stddev < 0:
        raise ValueError(f"stddev must be >= 0, got {stddev}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and stddev > 0:
        if rng is None:
            raise ValueError("train-mode noise requires an rng")
        out = Tensor(x.data + rng.normal(0.0, stddev, x.data.shape).astype(x.data.dtype))
    else:
        out = Tensor(x.data.copy())
    if tape is not None:
        def backward(upstream: np.ndarray) -> None:
            x.accumulate_grad(upstream)

        tape.record("noise", (x,), out, backward)
    return out


def mse_and_grad(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Mean squared error and its gradient w.r.t. ``pred``.

    The reduction accumulates in float64; the gradient is 2(pred-target)/N
    in the prediction's dtype.
    """
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"mse operands differ in shape: {pred.shape} vs {target.shape}")
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    value = float(np.mean(diff * diff))
    grad = (2.0 * diff / diff.size).astype(pred.data.dtype)
    return value, Tensor(grad)
