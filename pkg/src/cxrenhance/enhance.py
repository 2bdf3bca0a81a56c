"""Contrast enhancement techniques for chest radiographs.

Every technique is a deterministic map from an 8-bit image to an 8-bit image:

``he``          global histogram equalisation (min-normalised CDF remap)
``clahe``       contrast limited adaptive HE; RGB input is processed on the
                V channel of HSV
``complement``  y = 255 - x
``gamma``       adaptive gamma, gamma(x) = 1 + a*cos(pi*x / 255)
``bcet``        balance contrast enhancement, a parabola fitted so the output
                minimum, maximum and mean hit given targets

Plane-level functions take and return 2-D ``uint8`` arrays. Image-level
functions (:func:`clahe`, :func:`complement`, :func:`apply_technique`) accept an
:class:`~cxrenhance.raster.ImageBuffer` or an array and return the same kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .histogram import NBINS, ImageStats, compute_histogram, image_stats
from .raster import ImageBuffer, hsv_to_rgb_array, rgb_to_hsv_array

TECHNIQUES = ("original", "he", "clahe", "complement", "gamma", "bcet")

CLAHE_MAX_PASSES = 100
MIN_TILE_PIXELS = 16


class DegenerateInputError(ValueError):
    pass


class SingularFitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClaheParams:
    tiles_x: int = 8
    tiles_y: int = 8
    clip_factor: float = 2.0  # multiple of the uniform bin height

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ValueError("tile grid must be at least 1x1")
        if not self.clip_factor > 0:
            raise ValueError("clip_factor must be positive")


@dataclass(frozen=True)
class GammaParams:
    a: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.a < 1.0:
            raise ValueError(f"gamma weight a must lie in [0, 1), got {self.a}")


@dataclass(frozen=True)
class BcetTargets:
    L: float = 0.0
    H: float = 255.0
    E: float = 110.0

    def __post_init__(self):
        if not self.L < self.E < self.H:
            raise ValueError(f"BCET targets need L < E < H, got L={self.L}, E={self.E}, H={self.H}")


@dataclass(frozen=True)
class BcetCoefficients:
    a: float
    b: float
    c: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.a * (x - self.b) ** 2 + self.c


@dataclass(frozen=True)
class EnhanceParams:
    clahe: ClaheParams = field(default_factory=ClaheParams)
    gamma: GammaParams = field(default_factory=GammaParams)
    bcet: BcetTargets = field(default_factory=BcetTargets)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _plane(plane) -> np.ndarray:
    arr = np.asarray(plane)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("empty plane")
    if arr.dtype != np.uint8:
        arr = arr.astype(np.uint8)
    return arr


def _unwrap(img) -> tuple[np.ndarray, bool]:
    if isinstance(img, ImageBuffer):
        return img.data, True
    arr = np.asarray(img)
    if arr.ndim == 2:
        return arr[:, :, None], False
    return arr, False


def _rewrap(arr: np.ndarray, boxed: bool, was_2d: bool = False):
    if boxed:
        return ImageBuffer(arr)
    if was_2d:
        return arr[:, :, 0]
    return arr


def _round_u8(x: np.ndarray) -> np.ndarray:
    """Round half up and clamp to [0, 255]."""
    return np.clip(np.floor(np.asarray(x, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def equalization_lut(counts) -> np.ndarray:
    """Min-normalised CDF remap for a 256-bin histogram.

    T(k) = round(255 * (C[k] - C_min) / (N - C_min)) with C the cumulative
    counts and C_min the cumulative count at the lowest occupied bin. Evaluated
    in exact integer arithmetic. A histogram with a single occupied bin gives
    the identity table.
    """
    counts = np.asarray(counts, dtype=np.int64)
    cum = np.cumsum(counts)
    total = int(cum[-1])
    occupied = np.flatnonzero(counts)
    if occupied.size <= 1:
        return np.arange(NBINS, dtype=np.uint8)
    cmin = int(cum[occupied[0]])
    span = total - cmin
    num = np.maximum(cum - cmin, 0) * 255
    lut = (2 * num + span) // (2 * span)
    return lut.astype(np.uint8)


# ---------------------------------------------------------------------------
# histogram equalisation
# ---------------------------------------------------------------------------

def hist_equalize(plane) -> np.ndarray:
    arr = _plane(plane)
    lut = equalization_lut(compute_histogram(arr).counts)
    return lut[arr]


# ---------------------------------------------------------------------------
# CLAHE
# ---------------------------------------------------------------------------

def clip_limit(clip_factor: float, tile_pixels: int) -> int:
    return max(1, math.floor(clip_factor * tile_pixels / NBINS))


def clip_histogram(counts, limit: int, max_passes: int = CLAHE_MAX_PASSES) -> np.ndarray:
    """Clip bins at ``limit`` and spread the excess uniformly over all bins.

    Repeats until no bin exceeds the limit or ``max_passes`` passes have run;
    whatever still exceeds the limit afterwards is dropped.
    """
    h = np.asarray(counts, dtype=np.int64).copy()
    for _ in range(max_passes):
        excess = int(np.maximum(h - limit, 0).sum())
        if excess == 0:
            return h
        np.minimum(h, limit, out=h)
        inc, rem = divmod(excess, NBINS)
        h += inc
        if rem:
            h[(np.arange(rem) * NBINS) // rem] += 1
    return np.minimum(h, limit)


def _tile_edges(n: int, tiles: int) -> np.ndarray:
    return (np.arange(tiles + 1) * n) // tiles


def _interp_axis(n: int, edges: np.ndarray):
    """Neighbouring tile indices and weights along one axis (border clamped)."""
    centers = (edges[:-1] + edges[1:] - 1) / 2.0
    pos = np.arange(n, dtype=np.float64)
    last = len(centers) - 1
    i0 = np.searchsorted(centers, pos, side="right") - 1
    i0 = np.clip(i0, 0, last)
    i1 = np.minimum(i0 + 1, last)
    denom = centers[i1] - centers[i0]
    w = np.where(i1 > i0, (pos - centers[i0]) / np.where(denom > 0, denom, 1.0), 0.0)
    w = np.clip(w, 0.0, 1.0)
    return i0, i1, w


def clahe_plane(plane, params: ClaheParams = ClaheParams()) -> np.ndarray:
    arr = _plane(plane)
    H, W = arr.shape
    ys = _tile_edges(H, params.tiles_y)
    xs = _tile_edges(W, params.tiles_x)
    if np.diff(ys).min() * np.diff(xs).min() < MIN_TILE_PIXELS:
        raise ValueError(
            f"{params.tiles_x}x{params.tiles_y} tiles on a {W}x{H} image leave tiles under "
            f"{MIN_TILE_PIXELS} pixels"
        )

    luts = np.empty((params.tiles_y, params.tiles_x, NBINS), dtype=np.float64)
    for i in range(params.tiles_y):
        for j in range(params.tiles_x):
            tile = arr[ys[i]:ys[i + 1], xs[j]:xs[j + 1]]
            counts = np.bincount(tile.ravel(), minlength=NBINS)
            if np.count_nonzero(counts) <= 1:
                luts[i, j] = np.arange(NBINS)
                continue
            clipped = clip_histogram(counts, clip_limit(params.clip_factor, tile.size))
            luts[i, j] = equalization_lut(clipped)

    r0, r1, wy = _interp_axis(H, ys)
    c0, c1, wx = _interp_axis(W, xs)
    r0, r1, wy = r0[:, None], r1[:, None], wy[:, None]
    c0, c1, wx = c0[None, :], c1[None, :], wx[None, :]
    top = (1.0 - wx) * luts[r0, c0, arr] + wx * luts[r0, c1, arr]
    bottom = (1.0 - wx) * luts[r1, c0, arr] + wx * luts[r1, c1, arr]
    return _round_u8((1.0 - wy) * top + wy * bottom)


def clahe(img, params: ClaheParams = ClaheParams()):
    """CLAHE on a grayscale plane, or on the HSV value channel of an RGB image."""
    was_2d = not isinstance(img, ImageBuffer) and np.asarray(img).ndim == 2
    arr, boxed = _unwrap(img)
    if arr.shape[2] == 1:
        out = clahe_plane(arr[:, :, 0], params)[:, :, None]
    else:
        h, s, v = rgb_to_hsv_array(arr)
        v8 = _round_u8(v * 255.0)
        v_new = clahe_plane(v8, params).astype(np.float64) / 255.0
        out = hsv_to_rgb_array(h, s, v_new)
    return _rewrap(out, boxed, was_2d)


# ---------------------------------------------------------------------------
# complement
# ---------------------------------------------------------------------------

def complement(img):
    if isinstance(img, ImageBuffer):
        return ImageBuffer(255 - img.data)
    return (255 - np.asarray(img, dtype=np.uint8)).astype(np.uint8)


# ---------------------------------------------------------------------------
# adaptive gamma
# ---------------------------------------------------------------------------

GAMMA_MIDPOINT = 127.5


def gamma_curve(x, a: float) -> np.ndarray:
    """Real-valued gamma map g(x) = 255 * (x/255) ** (1/gamma(x))."""
    x = np.asarray(x, dtype=np.float64)
    phi = np.pi * x / (2.0 * GAMMA_MIDPOINT)
    gamma = 1.0 + a * np.cos(phi)
    return 255.0 * (x / 255.0) ** (1.0 / gamma)


def gamma_lut(params: GammaParams = GammaParams()) -> np.ndarray:
    lut = _round_u8(gamma_curve(np.arange(NBINS), params.a))
    lut[0], lut[255] = 0, 255
    return lut


def gamma_correct(plane, params: GammaParams = GammaParams()) -> np.ndarray:
    arr = _plane(plane)
    return gamma_lut(params)[arr]


# ---------------------------------------------------------------------------
# BCET
# ---------------------------------------------------------------------------

def bcet_fit(stats: ImageStats, t: BcetTargets = BcetTargets()) -> BcetCoefficients:
    """Solve for the parabola a*(x - b)**2 + c through (l, L), (h, H) with output mean E.

    ``stats.s`` must be the mean of squared input intensities.
    """
    l, h, e, s = stats.l, stats.h, stats.e, stats.s
    L, H, E = t.L, t.H, t.E
    if not h > l:
        raise DegenerateInputError("BCET needs a non-constant image (max == min)")

    terms = (h * (E - L), e * (H - L), l * (H - E))
    denom = 2.0 * (terms[0] - terms[1] + terms[2])
    if abs(denom) <= 1e-12 * 2.0 * sum(abs(v) for v in terms):
        raise SingularFitError("BCET vertex denominator is zero")
    b = (h * h * (E - L) - s * (H - L) + l * l * (H - E)) / denom

    q = h + l - 2.0 * b
    if abs(q) <= 1e-12 * (abs(h) + abs(l) + 2.0 * abs(b)):
        raise SingularFitError("BCET curvature denominator h + l - 2b is zero")
    a = (H - L) / ((h - l) * q)
    c = L - a * (l - b) ** 2
    return BcetCoefficients(a=a, b=b, c=c)


def bcet_curve(plane, coeffs: BcetCoefficients) -> np.ndarray:
    """Pre-quantisation BCET output as float64."""
    return coeffs(np.asarray(plane, dtype=np.float64))


def bcet_apply(plane, coeffs: BcetCoefficients) -> np.ndarray:
    arr = _plane(plane)
    lut = _round_u8(coeffs(np.arange(NBINS)))
    return lut[arr]


def bcet(plane, targets: BcetTargets = BcetTargets()) -> np.ndarray:
    """Fit and apply BCET; constant planes are returned unchanged."""
    arr = _plane(plane)
    stats = image_stats(arr)
    if stats.h == stats.l:
        return arr.copy()
    return bcet_apply(arr, bcet_fit(stats, targets))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _per_channel(arr: np.ndarray, fn) -> np.ndarray:
    return np.stack([fn(arr[:, :, c]) for c in range(arr.shape[2])], axis=-1)


def apply_technique(img, technique: str, params: EnhanceParams = EnhanceParams()):
    """Apply one of :data:`TECHNIQUES` by id.

    ``he``, ``gamma`` and ``bcet`` run on each channel independently.
    """
    if technique not in TECHNIQUES:
        raise ValueError(f"unknown technique {technique!r}; expected one of {TECHNIQUES}")
    if technique == "clahe":
        return clahe(img, params.clahe)
    if technique == "complement":
        return complement(img)

    was_2d = not isinstance(img, ImageBuffer) and np.asarray(img).ndim == 2
    arr, boxed = _unwrap(img)
    if technique == "original":
        out = np.array(arr, dtype=np.uint8)
    elif technique == "he":
        out = _per_channel(arr, hist_equalize)
    elif technique == "gamma":
        lut = gamma_lut(params.gamma)
        out = lut[arr]
    else:
        out = _per_channel(arr, lambda p: bcet(p, params.bcet))
    return _rewrap(out, boxed, was_2d)
