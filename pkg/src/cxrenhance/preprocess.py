"""Resize, Z-score normalisation, rotation augmentation and lung-mask application."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .raster import FloatImage, ImageBuffer

MAX_ROTATION = 45.0

# network input sizes: U-Net, InceptionV3, everything else
UNET_SIZE = (256, 256)
INCEPTION_SIZE = (299, 299)
DEFAULT_SIZE = (224, 224)


@dataclass(frozen=True)
class ResizeSpec:
    target_w: int
    target_h: int

    def __post_init__(self):
        if self.target_w < 1 or self.target_h < 1:
            raise ValueError("resize targets must be >= 1")


@dataclass(frozen=True)
class AugmentSpec:
    copies_per_image: int = 1
    max_abs_angle: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.copies_per_image < 0:
            raise ValueError("copies_per_image must be nonnegative")
        if not 0 < self.max_abs_angle <= MAX_ROTATION:
            raise ValueError(f"max_abs_angle must lie in (0, {MAX_ROTATION}]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray  # bool, (height, width); True = lung

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        arr = np.array(arr, dtype=bool)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_image(cls, img: ImageBuffer, threshold: int = 128) -> "BinaryMask":
        """Mask files are single-channel images; intensity >= 128 marks lung."""
        if img.channels != 1:
            raise ValueError("mask image must be single-channel")
        return cls(img.data[:, :, 0] >= threshold)

    def to_image(self) -> ImageBuffer:
        return ImageBuffer(self.data.astype(np.uint8) * 255)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return bool(np.array_equal(self.data, other.data))


def _unwrap(img) -> tuple[np.ndarray, bool, bool]:
    if isinstance(img, ImageBuffer):
        return img.data, True, False
    arr = np.asarray(img)
    if arr.ndim == 2:
        return arr[:, :, None], False, True
    return arr, False, False


def _rewrap(arr, boxed, was_2d):
    if boxed:
        return ImageBuffer(arr)
    return arr[:, :, 0] if was_2d else arr


def _round_u8(x):
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres: src = (j + 0.5) * n_in / n_out - 0.5, clamped at the edges
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img, spec: ResizeSpec):
    arr, boxed, was_2d = _unwrap(img)
    x = arr.astype(np.float64)
    r0, r1, wy = _axis_weights(arr.shape[0], spec.target_h)
    c0, c1, wx = _axis_weights(arr.shape[1], spec.target_w)
    wy = wy[:, None, None]
    rows = (1.0 - wy) * x[r0] + wy * x[r1]
    wx = wx[None, :, None]
    out = (1.0 - wx) * rows[:, c0] + wx * rows[:, c1]
    return _rewrap(_round_u8(out), boxed, was_2d)


def zscore_normalize(img) -> FloatImage:
    """Per-image (x - mean) / std with population statistics, per channel.

    A channel with zero spread maps to all zeros.
    """
    arr, _, _ = _unwrap(img)
    if arr.size == 0:
        raise ValueError("empty image")
    x = arr.astype(np.float64)
    mu = x.mean(axis=(0, 1), keepdims=True)
    sigma = x.std(axis=(0, 1), keepdims=True)
    safe = np.where(sigma > 0, sigma, 1.0)
    z = np.where(sigma > 0, (x - mu) / safe, 0.0)
    return FloatImage(z)


def rotate(img, angle: float):
    """Rotate about the image centre by ``angle`` degrees (positive is counter-clockwise).

    Bilinear resampling; samples falling outside the source frame are 0.
    """
    if not abs(angle) <= MAX_ROTATION:
        raise ValueError(f"rotation angle must satisfy |angle| <= {MAX_ROTATION}, got {angle}")
    arr, boxed, was_2d = _unwrap(img)
    if angle == 0:
        return _rewrap(np.array(arr, dtype=np.uint8), boxed, was_2d)
    H, W = arr.shape[:2]
    theta = math.radians(angle)
    cos, sin = math.cos(theta), math.sin(theta)
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    dy, dx = np.mgrid[0:H, 0:W].astype(np.float64)
    dy -= cy
    dx -= cx
    sx = cx + cos * dx - sin * dy
    sy = cy + sin * dx + cos * dy

    inside = (sx >= -0.5) & (sx <= W - 0.5) & (sy >= -0.5) & (sy <= H - 0.5)
    sx = np.clip(sx, 0.0, W - 1)
    sy = np.clip(sy, 0.0, H - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = (sx - x0)[..., None]
    wy = (sy - y0)[..., None]
    src = arr.astype(np.float64)
    top = (1.0 - wx) * src[y0, x0] + wx * src[y0, x1]
    bottom = (1.0 - wx) * src[y1, x0] + wx * src[y1, x1]
    out = (1.0 - wy) * top + wy * bottom
    out[~inside] = 0.0
    return _rewrap(_round_u8(out), boxed, was_2d)


def _rng_for(seed: int, image_id: str) -> np.random.Generator:
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    words = np.frombuffer(digest, dtype="<u4").tolist()
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, *words]))


def rotation_angles(spec: AugmentSpec, image_id: str) -> np.ndarray:
    """Angles drawn uniformly from [-max_abs_angle, max_abs_angle], keyed by (seed, image_id)."""
    rng = _rng_for(spec.seed, image_id)
    return rng.uniform(-spec.max_abs_angle, spec.max_abs_angle, size=spec.copies_per_image)


def augment_rotations(img, spec: AugmentSpec, image_id: str) -> list:
    return [rotate(img, float(a)) for a in rotation_angles(spec, image_id)]


def apply_mask(img, mask: BinaryMask):
    arr, boxed, was_2d = _unwrap(img)
    if arr.shape[:2] != mask.data.shape:
        raise ValueError(
            f"mask is {mask.width}x{mask.height} but image is {arr.shape[1]}x{arr.shape[0]}"
        )
    out = np.where(mask.data[:, :, None], arr, 0).astype(np.uint8)
    return _rewrap(out, boxed, was_2d)
