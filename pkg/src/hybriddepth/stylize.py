"""Deterministic texture-shift generators.

watercolor      iterated bilateral smoothing: flattens texture, keeps edges
pencil_sketch   grayscale -> invert -> blur -> color dodge: removes texture
                and most shading, leaving dark strokes at edges
patch_shuffle   permutes image blocks: destroys shape, keeps local texture

All three map [0, 1] images to [0, 1] images and are pure functions of
(image, params, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])  # Rec. 601 luma
DODGE_EPS = 1e-4


@dataclass
class WatercolorParams:
    iterations: int = 3
    sigma_spatial: float = 2.0
    sigma_range: float = 0.15

    def __post_init__(self):
        if self.sigma_spatial <= 0 or self.sigma_range <= 0:
            raise ConfigError("watercolor sigmas must be positive")
        if self.iterations < 1:
            raise ConfigError("watercolor needs at least one iteration")


@dataclass
class SketchParams:
    blur_sigma: float = 3.0

    def __post_init__(self):
        if self.blur_sigma <= 0:
            raise ConfigError("sketch blur sigma must be positive")


def _check_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractError(f"expected (H, W, 3) image, got {arr.shape}")
    return arr


def _reflect_pad(img: np.ndarray, r: int) -> np.ndarray:
    pads = ((r, r), (r, r)) + ((0, 0),) * (img.ndim - 2)
    return np.pad(img, pads, mode="reflect")


def bilateral_filter(img: np.ndarray, sigma_spatial: float, sigma_range: float) -> np.ndarray:
    """One pass of joint spatial/range smoothing (vectorized over offsets)."""
    radius = max(1, int(np.ceil(2.0 * sigma_spatial)))
    padded = _reflect_pad(img, radius)
    h, w = img.shape[:2]
    acc = np.zeros_like(img)
    weight = np.zeros(img.shape[:2])
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            shifted = padded[radius + dy:radius + dy + h, radius + dx:radius + dx + w]
            spatial = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma_spatial ** 2))
            diff2 = ((shifted - img) ** 2).sum(axis=2)
            range_w = np.exp(-diff2 / (2.0 * sigma_range ** 2))
            wgt = spatial * range_w
            acc += wgt[..., None] * shifted
            weight += wgt
    return acc / weight[..., None]


def watercolor(img: np.ndarray, params: WatercolorParams | None = None) -> np.ndarray:
    params = params or WatercolorParams()
    out = _check_image(img)
    for _ in range(params.iterations):
        out = bilateral_filter(out, params.sigma_spatial, params.sigma_range)
    return np.clip(out, 0.0, 1.0)


def gaussian_blur(gray: np.ndarray, sigma: float) -> np.ndarray:
    """Separable gaussian with reflect borders on a single-channel image."""
    radius = max(1, int(np.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-xs * xs / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    padded = np.pad(gray, ((radius, radius), (0, 0)), mode="reflect")
    rows = sum(k * padded[i:i + gray.shape[0]] for i, k in enumerate(kernel))
    padded = np.pad(rows, ((0, 0), (radius, radius)), mode="reflect")
    return sum(k * padded[:, i:i + gray.shape[1]] for i, k in enumerate(kernel))


def pencil_sketch(img: np.ndarray, params: SketchParams | None = None) -> np.ndarray:
    """Dodge-blend sketch; constant regions map to exactly 1 (white)."""
    params = params or SketchParams()
    arr = _check_image(img)
    gray = arr @ GRAY_WEIGHTS
    blurred_inverse = gaussian_blur(1.0 - gray, params.blur_sigma)
    # symmetric epsilon keeps flat fields exactly at (g + e)/(g + e) = 1
    sketch = (gray + DODGE_EPS) / (1.0 - blurred_inverse + DODGE_EPS)
    sketch = np.clip(sketch, 0.0, 1.0)
    return np.repeat(sketch[..., None], 3, axis=2)


def patch_shuffle(img: np.ndarray, patch: int, seed: int = 0) -> np.ndarray:
    """Uniform random permutation of non-overlapping patch blocks."""
    arr = _check_image(img)
    h, w = arr.shape[:2]
    if patch < 1 or h % patch or w % patch:
        raise ConfigError(f"patch size {patch} must divide extents {h}x{w}")
    gh, gw = h // patch, w // patch
    blocks = (arr.reshape(gh, patch, gw, patch, 3)
              .transpose(0, 2, 1, 3, 4)
              .reshape(gh * gw, patch, patch, 3))
    perm = np.random.default_rng(seed).permutation(gh * gw)
    shuffled = blocks[perm]
    return (shuffled.reshape(gh, gw, patch, patch, 3)
            .transpose(0, 2, 1, 3, 4)
            .reshape(h, w, 3))
