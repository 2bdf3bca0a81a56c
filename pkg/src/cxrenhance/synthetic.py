"""Synthetic radiograph-like test images (smooth background, two bright lung fields, noise)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .raster import ImageBuffer


def smooth_field(shape, rng: np.random.Generator, sigma: float = 4.0) -> np.ndarray:
    """Low-frequency random field scaled to [0, 255] as float64."""
    noise = rng.standard_normal(shape)
    field = ndimage.gaussian_filter(noise, sigma=sigma, mode="reflect")
    lo, hi = field.min(), field.max()
    if hi == lo:
        return np.zeros(shape)
    return (field - lo) / (hi - lo) * 255.0


def synthetic_cxr(size: int = 256, rng: np.random.Generator | None = None, channels: int = 1) -> ImageBuffer:
    rng = rng if rng is not None else np.random.default_rng(0)
    yy, xx = np.mgrid[0:size, 0:size] / size
    body = 90.0 + 40.0 * np.exp(-((xx - 0.5) ** 2) / 0.08)
    lungs = np.zeros((size, size))
    for cx in (0.32, 0.68):
        cx = cx + rng.uniform(-0.03, 0.03)
        lungs += np.exp(-(((xx - cx) / 0.13) ** 2 + ((yy - 0.5) / 0.28) ** 2) ** 2)
    img = body - 60.0 * lungs + 0.25 * (smooth_field((size, size), rng, size / 32) - 128)
    img += rng.normal(0, 4.0, (size, size))
    # compress into a narrow, dim range like an under-exposed film
    img = 30 + 0.6 * np.clip(img, 0, 255)
    plane = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    if channels == 3:
        plane = np.stack([plane, plane, plane], axis=-1)
    return ImageBuffer(plane)


def synthetic_lung_mask(size: int = 256) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    m = np.zeros((size, size), dtype=bool)
    for cx in (0.32, 0.68):
        m |= ((xx - cx) / 0.13) ** 2 + ((yy - 0.5) / 0.28) ** 2 <= 1.0
    return m


def random_planes(n: int, shape=(32, 32), seed: int = 0, low: int = 0, high: int = 256):
    """``n`` uniformly random uint8 planes that are guaranteed non-constant."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        p = rng.integers(low, high, size=shape, dtype=np.int64).astype(np.uint8)
        if p.min() != p.max():
            out.append(p)
    return out
