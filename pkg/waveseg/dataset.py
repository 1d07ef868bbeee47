"""
Synthetic Segmentation Data
Grayscale images with three classes: background, filled blobs and thin
1-2 px lines. Thin lines are the fine structures that lose detail first when
a network down-samples.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from waveseg.config import DEPTH
from waveseg.errors import ArgumentError
from waveseg.tensor import Tensor

BACKGROUND, BLOB, THIN_LINE = 0, 1, 2

BLOB_INTENSITY = 0.85
LINE_INTENSITY = 0.6
NOISE_STD = 0.03
MAX_ATTEMPTS = 100


@dataclass(frozen=True, eq=False)
class SegSample:
    image: Tensor      # [1, H, W], values in [0, 1]
    mask: np.ndarray   # [H, W], int64 labels


def _draw_blob(rng: np.random.Generator, image: np.ndarray, mask: np.ndarray):
    H, W = mask.shape
    r_max = min(6, (min(H, W) - 1) // 2)
    radius = int(rng.integers(min(3, r_max), r_max + 1))
    cy = int(rng.integers(radius, H - radius))
    cx = int(rng.integers(radius, W - radius))
    yy, xx = np.ogrid[:H, :W]
    disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
    image[disc] = BLOB_INTENSITY + rng.uniform(-0.05, 0.05)
    mask[disc] = BLOB


def _draw_line(rng: np.random.Generator, image: np.ndarray, mask: np.ndarray):
    H, W = mask.shape
    width = int(rng.integers(1, 3))
    orientation = rng.choice(["horizontal", "vertical", "diagonal"])
    stroke = np.zeros(mask.shape, dtype=bool)
    if orientation == "horizontal":
        row = int(rng.integers(0, H - width + 1))
        start = int(rng.integers(0, W // 2))
        stop = int(rng.integers(start + W // 2, W + 1))
        stroke[row:row + width, start:stop] = True
    elif orientation == "vertical":
        col = int(rng.integers(0, W - width + 1))
        start = int(rng.integers(0, H // 2))
        stop = int(rng.integers(start + H // 2, H + 1))
        stroke[start:stop, col:col + width] = True
    else:
        length = int(rng.integers(min(H, W) // 2, min(H, W - width + 1) + 1))
        r0 = int(rng.integers(0, H - length + 1))
        c0 = int(rng.integers(0, W - length - width + 2))
        steps = np.arange(length)
        for offset in range(width):
            stroke[r0 + steps, c0 + steps + offset] = True
    image[stroke] = LINE_INTENSITY
    mask[stroke] = THIN_LINE


def _sample(rng: np.random.Generator, H: int, W: int) -> SegSample:
    for _ in range(MAX_ATTEMPTS):
        image = np.full((H, W), rng.uniform(0.1, 0.25))
        mask = np.zeros((H, W), dtype=np.int64)
        for _ in range(int(rng.integers(1, 3))):
            _draw_blob(rng, image, mask)
        # lines go last so they cross over blobs
        for _ in range(int(rng.integers(1, 3))):
            _draw_line(rng, image, mask)
        if len(np.unique(mask)) == 3:
            image = np.clip(image + rng.normal(0.0, NOISE_STD, size=image.shape), 0.0, 1.0)
            return SegSample(Tensor(image[None]), mask)
    raise ArgumentError(f"could not fit all three classes into a {H}x{W} image")


def gen_dataset(n: int, H: int, W: int, seed: int, depth: int = DEPTH) -> List[SegSample]:
    """
    Generate n samples reproducibly from seed.

    Every sample holds background, at least one blob and at least one thin line.
    """
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    factor = 2 ** depth
    if H % factor or W % factor:
        raise ArgumentError(f"image size {H}x{W} must be divisible by 2^{depth} = {factor}")
    if min(H, W) < 8:
        raise ArgumentError(f"images must be at least 8x8, got {H}x{W}")
    rng = np.random.default_rng(seed)
    return [_sample(rng, H, W) for _ in range(n)]


def stack(samples: Sequence[SegSample]) -> Tuple[np.ndarray, np.ndarray]:
    """Batch arrays: images [B, 1, H, W] and labels [B, H, W]."""
    images = np.stack([np.asarray(s.image) for s in samples])
    labels = np.stack([s.mask for s in samples])
    return images, labels
