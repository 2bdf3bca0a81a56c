"""Intensity histograms, CDFs and the scalar statistics used by BCET."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

NBINS = 256


def _as_plane(plane) -> np.ndarray:
    arr = np.asarray(plane)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.size == 0:
        raise ValueError("empty plane")
    if arr.ndim not in (1, 2):
        raise ValueError(f"expected a single-channel plane, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Histogram:
    counts: np.ndarray  # int64, length 256
    total: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (NBINS,) or (counts < 0).any():
            raise ValueError("histogram needs 256 nonnegative counts")
        if int(counts.sum()) != self.total or self.total <= 0:
            raise ValueError("total must equal the (positive) sum of counts")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def probabilities(self) -> np.ndarray:
        """Normalised histogram, n_k / (M*N)."""
        return self.counts / self.total

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return self.total == other.total and bool(np.array_equal(self.counts, other.counts))


@dataclass(frozen=True)
class ImageStats:
    l: float  # min
    h: float  # max
    e: float  # mean
    s: float  # mean of squares


def compute_histogram(plane) -> Histogram:
    arr = _as_plane(plane)
    counts = np.bincount(arr.ravel().astype(np.intp), minlength=NBINS)
    if counts.shape[0] != NBINS:
        raise ValueError("plane intensities exceed 255")
    return Histogram(counts, int(arr.size))


def normalized_cdf(hist: Histogram) -> np.ndarray:
    cdf = np.cumsum(hist.counts) / hist.total
    # cumulative integer sum is exact, so cdf[255] is exactly 1.0
    return cdf


def image_stats(plane) -> ImageStats:
    arr = _as_plane(plane).astype(np.int64).ravel()
    n = arr.size
    # integer accumulation is exact; only the final division rounds
    return ImageStats(
        l=float(arr.min()),
        h=float(arr.max()),
        e=int(arr.sum()) / n,
        s=int(np.square(arr).sum()) / n,
    )


def histogram_csv(hist: Histogram) -> str:
    """``bin,count`` CSV with 256 rows."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["bin", "count"])
    for k, n in enumerate(hist.counts):
        w.writerow([k, int(n)])
    return out.getvalue()
