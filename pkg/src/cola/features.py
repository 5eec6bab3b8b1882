"""Per-frame statistics used for candidate gating and clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cola.color import luma
from cola.frames import Frame


@dataclass(frozen=True)
class FrameFeatures:
    """Scores of a single frame.

    ``histogram`` is the L1-normalized concatenation of 3 per-channel
    histograms (each channel block sums to 1, so the whole vector sums
    to 3).  ``laplacian_variance`` is 0 iff the Laplacian response is
    constant.
    """

    brightness: float
    entropy: float
    histogram: np.ndarray = field(repr=False)
    laplacian_variance: float

    def to_dict(self) -> dict:
        return {
            "brightness": self.brightness,
            "entropy": self.entropy,
            "histogram": [float(v) for v in self.histogram],
            "laplacian_variance": self.laplacian_variance,
        }


def brightness_score(frame: Frame | np.ndarray) -> float:
    """Mean Rec.601 luma over all pixels, in [0, 255]."""
    return float(np.mean(luma(frame)))


def entropy_score(frame: Frame | np.ndarray) -> float:
    """Shannon entropy in bits of the 256-bin luma histogram, in [0, 8].

    Luma values are rounded to the nearest integer bin; empty bins
    contribute 0 (the 0 log 0 := 0 convention).
    """
    bins = np.clip(np.rint(luma(frame)), 0, 255).astype(np.int64)
    counts = np.bincount(bins.ravel(), minlength=256)
    p = counts[counts > 0] / bins.size
    return float(-np.sum(p * np.log2(p)))


def color_histogram(frame: Frame | np.ndarray, bins: int) -> np.ndarray:
    """Per-channel color histogram, concatenated R||G||B (length 3*bins).

    Bin edges are ceil(256/bins) wide with the last bin absorbing any
    remainder; each channel block is L1-normalized.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    px = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    width = math.ceil(256 / bins)
    idx = np.minimum(px.astype(np.int64) // width, bins - 1)
    n_pixels = px.shape[0] * px.shape[1]
    blocks = [
        np.bincount(idx[..., c].ravel(), minlength=bins) / n_pixels
        for c in range(3)
    ]
    return np.concatenate(blocks)


def laplacian_variance(frame: Frame | np.ndarray) -> float:
    """Population variance of the luma Laplacian response (blur score).

    Convolves luma with [[0,1,0],[1,-4,1],[0,1,0]] using replicate
    padding at the borders.  Requires at least a 3x3 frame.
    """
    plane = luma(frame)
    h, w = plane.shape
    if h < 3 or w < 3:
        raise ValueError(f"laplacian_variance needs at least 3x3, got {w}x{h}")
    p = np.pad(plane, 1, mode="edge")
    response = (
        p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * p[1:-1, 1:-1]
    )
    return float(np.var(response))


def compute_features(frame: Frame | np.ndarray, bins: int) -> FrameFeatures:
    """All four scores of a frame in one pass."""
    return FrameFeatures(
        brightness=brightness_score(frame),
        entropy=entropy_score(frame),
        histogram=color_histogram(frame, bins),
        laplacian_variance=laplacian_variance(frame),
    )
