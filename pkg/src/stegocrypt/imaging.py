"""8-bit image buffers, PPM I/O, synthetic datasets, and steganalysis metrics.

Pixels are uint8, row-major, channel-interleaved (H, W, C) with C of 1 or 3.
Network code converts bytes to [0,1] floats via v/255 and back via
floor(clamp(v,0,1)*255 + 0.5). All MSE figures here are on the byte scale
(0..255 squared) so numbers stay comparable across image sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeMismatchError

__all__ = [
    "ImageBuffer",
    "MetricsRecord",
    "read_ppm",
    "write_ppm",
    "resize_nearest",
    "histogram",
    "mse_per_pixel",
    "adjacent_correlation",
    "mean_abs_adjacent_correlation",
    "residual_enhance",
    "to_grayscale",
    "image_similarity",
    "synth_dataset",
    "write_metrics_csv",
    "METRICS_CSV_HEADER",
]


class ImageBuffer:
    """A uint8 pixel grid of shape (height, width, channels)."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ShapeMismatchError(f"pixels must be (H, W, 1|3), got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {arr.dtype}")
        self.pixels = arr

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def to_float(self) -> np.ndarray:
        """Pixels scaled to [0,1] float32."""
        return self.pixels.astype(np.float32) / np.float32(255.0)

    @classmethod
    def from_float(cls, arr: np.ndarray) -> "ImageBuffer":
        """Quantize [0,1] floats back to bytes: floor(clamp(v)*255 + 0.5)."""
        q = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5)
        return cls(q.astype(np.uint8))

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.pixels.copy())

    def __eq__(self, other):
        return (isinstance(other, ImageBuffer)
                and self.pixels.shape == other.pixels.shape
                and np.array_equal(self.pixels, other.pixels))

    def __repr__(self):  # pragma: no cover
        return f"ImageBuffer({self.height}x{self.width}x{self.channels})"


@dataclass
class MetricsRecord:
    """Per-epoch evaluation metrics (MSE values on the 0-255 byte scale)."""

    epoch: int
    encode_loss: float
    reveal_loss: float
    cover_mse: float
    secret_mse: float
    container_corr: float = 0.0

    def __post_init__(self):
        if self.cover_mse < 0 or self.secret_mse < 0:
            raise ValueError("MSE values must be >= 0")


METRICS_CSV_HEADER = "epoch,encode_loss,reveal_loss,cover_mse,secret_mse"


def write_metrics_csv(records: list[MetricsRecord]) -> str:
    lines = [METRICS_CSV_HEADER]
    for r in records:
        lines.append(f"{r.epoch},{r.encode_loss:.9g},{r.reveal_loss:.9g},"
                     f"{r.cover_mse:.9g},{r.secret_mse:.9g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# PPM (P6, maxval 255)

def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise FormatError(f"unexpected end of header at byte {pos}")
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def read_ppm(data: bytes) -> ImageBuffer:
    """Parse a binary PPM (magic P6, maxval 255) into a 3-channel buffer."""
    magic, pos = _next_token(data, 0)
    if magic != b"P6":
        raise FormatError(f"bad magic {magic!r} at byte 0, expected b'P6'")
    fields = []
    for label in ("width", "height", "maxval"):
        tok, pos = _next_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"non-numeric {label} {tok!r} at byte {pos - len(tok)}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"maxval {maxval} unsupported, expected 255")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(f"missing whitespace after maxval at byte {pos}")
    pos += 1
    need = width * height * 3
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise FormatError(f"truncated pixel data at byte {pos + len(payload)}: "
                          f"need {need} bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer(pixels.copy())


def write_ppm(image: ImageBuffer) -> bytes:
    """Serialize to binary PPM. Grayscale buffers are replicated to RGB."""
    px = image.pixels
    if image.channels == 1:
        px = np.repeat(px, 3, axis=2)
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + px.tobytes()


# ---------------------------------------------------------------------------
# Geometry and metrics

def resize_nearest(image: ImageBuffer, new_h: int, new_w: int) -> ImageBuffer:
    """Nearest-neighbor resample; source index floor((i + 0.5) * src/dst)."""
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target dims must be >= 1, got {new_h}x{new_w}")
    if (new_h, new_w) == (image.height, image.width):
        return image.copy()
    rows = np.floor((np.arange(new_h) + 0.5) * (image.height / new_h)).astype(np.int64)
    cols = np.floor((np.arange(new_w) + 0.5) * (image.width / new_w)).astype(np.int64)
    rows = np.clip(rows, 0, image.height - 1)
    cols = np.clip(cols, 0, image.width - 1)
    return ImageBuffer(image.pixels[rows][:, cols])


def histogram(image: ImageBuffer) -> np.ndarray:
    """Per-channel counts of each byte value; shape (channels, 256)."""
    out = np.zeros((image.channels, 256), dtype=np.int64)
    for c in range(image.channels):
        out[c] = np.bincount(image.pixels[:, :, c].ravel(), minlength=256)
    return out


def mse_per_pixel(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean squared byte difference over all H*W*C positions."""
    if a.pixels.shape != b.pixels.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.mean(diff * diff))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = x.astype(np.float64).ravel()
    y = y.astype(np.float64).ravel()
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return 0.0
    return float((xc * yc).sum() / denom)


def adjacent_correlation(image: ImageBuffer) -> np.ndarray:
    """Per-channel (horizontal, vertical) Pearson r of neighboring pixels."""
    if image.height < 2 or image.width < 2:
        raise ShapeMismatchError("adjacent correlation needs at least a 2x2 image")
    out = np.zeros((image.channels, 2), dtype=np.float64)
    px = image.pixels
    for c in range(image.channels):
        plane = px[:, :, c]
        out[c, 0] = _pearson(plane[:, :-1], plane[:, 1:])
        out[c, 1] = _pearson(plane[:-1, :], plane[1:, :])
    return out


def mean_abs_adjacent_correlation(image: ImageBuffer) -> float:
    """Mean of |r| over both directions and all channels."""
    return float(np.mean(np.abs(adjacent_correlation(image))))


def to_grayscale(image: ImageBuffer) -> ImageBuffer:
    """Channel-mean grayscale copy."""
    if image.channels == 1:
        return image.copy()
    gray = np.floor(image.pixels.astype(np.float64).mean(axis=2) + 0.5)
    return ImageBuffer(gray.astype(np.uint8)[:, :, None])


def residual_enhance(cover: ImageBuffer, container: ImageBuffer) -> ImageBuffer:
    """Absolute difference, channel-averaged, stretched to fill 0..255.

    A constant difference (max == min) maps to all zeros.
    """
    if cover.pixels.shape != container.pixels.shape:
        raise ShapeMismatchError(
            f"image shapes differ: {cover.pixels.shape} vs {container.pixels.shape}")
    diff = np.abs(cover.pixels.astype(np.float64) - container.pixels.astype(np.float64))
    gray = diff.mean(axis=2)
    lo, hi = gray.min(), gray.max()
    if hi == lo:
        stretched = np.zeros_like(gray)
    else:
        stretched = (gray - lo) * (255.0 / (hi - lo))
    return ImageBuffer(np.floor(stretched + 0.5).astype(np.uint8)[:, :, None])


def image_similarity(a: ImageBuffer, b: ImageBuffer) -> float:
    """Pearson correlation over all pixels; 0 when either side is constant."""
    if a.pixels.shape != b.pixels.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    return _pearson(a.pixels, b.pixels)


# ---------------------------------------------------------------------------
# Synthetic dataset

def _distinct_colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two RGB colors at least 64 apart in every channel."""
    c0 = rng.integers(0, 256, size=3).astype(np.float64)
    delta = rng.integers(64, 192, size=3).astype(np.float64)
    sign = np.where(c0 < 128, 1.0, -1.0)
    c1 = np.clip(c0 + sign * delta, 0, 255)
    return c0, c1


def _gradient_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Linear ramp in [0,1] along a random direction."""
    angle = rng.uniform(0.0, 2.0 * np.pi)
    dx, dy = np.cos(angle), np.sin(angle)
    xs = np.arange(size, dtype=np.float64)
    proj = xs[None, :] * dx + xs[:, None] * dy
    lo, hi = proj.min(), proj.max()
    return (proj - lo) / (hi - lo) if hi > lo else np.zeros((size, size))


def _gradient_image(rng: np.random.Generator, size: int) -> np.ndarray:
    c0, c1 = _distinct_colors(rng)
    t = _gradient_field(rng, size)
    return c0[None, None, :] + t[:, :, None] * (c1 - c0)[None, None, :]


def _shapes_image(rng: np.random.Generator, size: int) -> np.ndarray:
    img = _gradient_image(rng, size)
    ys, xs = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(1, 4))):
        color = rng.integers(0, 256, size=3).astype(np.float64)
        cy, cx = rng.integers(0, size, size=2)
        extent = int(rng.integers(max(2, size // 8), max(3, size // 2)))
        if rng.integers(0, 2) == 0:
            mask = (np.abs(ys - cy) <= extent // 2) & (np.abs(xs - cx) <= extent // 2)
        else:
            mask = (ys - cy) ** 2 + (xs - cx) ** 2 <= (extent // 2) ** 2
        img[mask] = color
    return img


def _bilinear_upsample(field: np.ndarray, size: int) -> np.ndarray:
    src = field.shape[0]
    pos = (np.arange(size) + 0.5) * (src / size) - 0.5
    i0 = np.clip(np.floor(pos), 0, src - 1).astype(np.int64)
    i1 = np.clip(i0 + 1, 0, src - 1)
    frac = np.clip(pos - i0, 0.0, 1.0)
    top = field[i0][:, i0] * (1 - frac)[None, :] + field[i0][:, i1] * frac[None, :]
    bot = field[i1][:, i0] * (1 - frac)[None, :] + field[i1][:, i1] * frac[None, :]
    return top * (1 - frac)[:, None] + bot * frac[:, None]


def _texture_image(rng: np.random.Generator, size: int) -> np.ndarray:
    lattice = max(2, size // 8)
    field = _bilinear_upsample(rng.random((lattice, lattice)), size)
    c0, c1 = _distinct_colors(rng)
    return c0[None, None, :] + field[:, :, None] * (c1 - c0)[None, None, :]


_KINDS = ("gradients", "shapes", "texture")


def synth_dataset(seed: int, count: int, size: int, kind: str = "mixed") -> list[ImageBuffer]:
    """Deterministic synthetic RGB images; each depends only on (seed, index).

    Kinds: linear two-color gradients, filled shapes on gradient backgrounds,
    value-noise textures, or "mixed" cycling through all three.
    """
    if kind not in _KINDS and kind != "mixed":
        raise ValueError(f"unknown dataset kind {kind!r}")
    images = []
    for i in range(count):
        k = _KINDS[i % len(_KINDS)] if kind == "mixed" else kind
        rng = np.random.default_rng([seed, i])
        if k == "gradients":
            arr = _gradient_image(rng, size)
        elif k == "shapes":
            arr = _shapes_image(rng, size)
        else:
            arr = _texture_image(rng, size)
        images.append(ImageBuffer(np.floor(np.clip(arr, 0, 255) + 0.5).astype(np.uint8)))
    return images
