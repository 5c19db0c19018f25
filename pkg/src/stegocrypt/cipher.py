"""Keyed block-scrambling image cipher and its keyspace arithmetic.

The image is tiled into grid_side x grid_side equal rectangular blocks
(row-major). Encryption moves whole blocks: destination block i receives
source block perm[i], with all channels traveling together, so the pixel
multiset - and therefore every per-channel histogram - is preserved
exactly. grid_side**2 is the order of encryption; n blocks admit n!
arrangements.

Key derivation is pinned so independent implementations agree bit-for-bit:
a SplitMix64 stream (gamma 0x9E3779B97F4A7C15, mix constants
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB, final xor-shift 31) seeds a
descending Fisher-Yates shuffle whose draw for position i is the high
64 bits of next() * (i + 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ShapeMismatchError
from .imaging import ImageBuffer

__all__ = [
    "SplitMix64",
    "PermutationKey",
    "derive_key",
    "encrypt",
    "decrypt",
    "keyspace",
    "brute_force_years",
    "format_key_file",
    "parse_key_file",
    "SECONDS_PER_YEAR",
]

_MASK64 = (1 << 64) - 1
SECONDS_PER_YEAR = 31_557_600  # Julian year


class SplitMix64:
    """The reference SplitMix64 stream over 64-bit unsigned integers."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


@dataclass(frozen=True)
class PermutationKey:
    """Seed-derived bijection on block indices; perm maps destination -> source."""

    seed: int
    grid_side: int
    perm: np.ndarray = field(repr=False)

    @property
    def n_blocks(self) -> int:
        return self.grid_side * self.grid_side

    def is_bijection(self) -> bool:
        return np.array_equal(np.sort(self.perm), np.arange(self.n_blocks))


def derive_key(seed: int, grid_side: int) -> PermutationKey:
    """Deterministic permutation of the grid_side**2 block indices."""
    if grid_side < 1:
        raise ValueError(f"grid_side must be >= 1, got {grid_side}")
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    n = grid_side * grid_side
    rng = SplitMix64(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = (rng.next64() * (i + 1)) >> 64
        perm[i], perm[j] = perm[j], perm[i]
    return PermutationKey(seed=seed, grid_side=grid_side,
                          perm=np.asarray(perm, dtype=np.int64))


def _check_divisible(image: ImageBuffer, key: PermutationKey) -> None:
    g = key.grid_side
    if image.height % g or image.width % g:
        down_h, down_w = (image.height // g) * g, (image.width // g) * g
        up_h, up_w = -(-image.height // g) * g, -(-image.width // g) * g
        raise ShapeMismatchError(
            f"image {image.height}x{image.width} is not divisible into a "
            f"{g}x{g} block grid; resize to {down_h}x{down_w} or pad to {up_h}x{up_w}")


def _permute_blocks(pixels: np.ndarray, perm: np.ndarray, grid_side: int) -> np.ndarray:
    h, w, c = pixels.shape
    bh, bw = h // grid_side, w // grid_side
    blocks = (pixels.reshape(grid_side, bh, grid_side, bw, c)
              .transpose(0, 2, 1, 3, 4)
              .reshape(grid_side * grid_side, bh, bw, c))
    blocks = blocks[perm]
    return (blocks.reshape(grid_side, grid_side, bh, bw, c)
            .transpose(0, 2, 1, 3, 4)
            .reshape(h, w, c))


def encrypt(image: ImageBuffer, key: PermutationKey) -> ImageBuffer:
    """Scramble blocks: destination block i is source block perm[i]."""
    _check_divisible(image, key)
    return ImageBuffer(_permute_blocks(image.pixels, key.perm, key.grid_side))


def decrypt(image: ImageBuffer, key: PermutationKey) -> ImageBuffer:
    """Invert the scramble; decrypt(encrypt(x, k), k) == x bit-exactly."""
    _check_divisible(image, key)
    inverse = np.argsort(key.perm)
    return ImageBuffer(_permute_blocks(image.pixels, inverse, key.grid_side))


def keyspace(n_blocks: int) -> tuple[float, float]:
    """(log10, log2) of n_blocks! by exact log summation, no approximation."""
    if n_blocks < 1:
        raise ValueError(f"n_blocks must be >= 1, got {n_blocks}")
    ln = math.fsum(math.log(k) for k in range(2, n_blocks + 1))
    return ln / math.log(10.0), ln / math.log(2.0)


def brute_force_years(n_blocks: int, ops_per_second: float) -> float:
    """log10 of the years needed to enumerate all n_blocks! permutations."""
    if ops_per_second <= 0:
        raise ValueError(f"ops_per_second must be > 0, got {ops_per_second}")
    log10_perms, _ = keyspace(n_blocks)
    return log10_perms - math.log10(ops_per_second) - math.log10(SECONDS_PER_YEAR)


# ---------------------------------------------------------------------------
# Key file: single line "SGKEY1 <seed> <grid_side>\n"; the permutation is
# always re-derived, never stored.

def format_key_file(key: PermutationKey) -> str:
    return f"SGKEY1 {key.seed} {key.grid_side}\n"


def parse_key_file(text: str) -> PermutationKey:
    parts = text.split()
    if len(parts) != 3 or parts[0] != "SGKEY1":
        raise FormatError(f"malformed key file: expected 'SGKEY1 <seed> <grid>', got {text!r}")
    try:
        seed, grid_side = int(parts[1]), int(parts[2])
    except ValueError:
        raise FormatError(f"non-integer key fields in {text!r}") from None
    return derive_key(seed, grid_side)
