"""Keyframe selection.

The pipeline over a frame stream:

1. Candidate filtering: a frame becomes a candidate when it clears the
   brightness and entropy gates and differs from the last *accepted*
   candidate by more than a mean-absolute-LUV threshold (the first frame
   clearing the gates is always accepted).  Differencing against the
   last accepted candidate rather than the previous frame suppresses
   slow drift.
2. If at most ``max_keyframes`` candidates survive, all are returned.
   Otherwise candidate color histograms are k-means clustered with
   k = ``max_keyframes`` and the sharpest frame of each cluster (highest
   Laplacian variance, ties to the lower frame index) wins.

Output is ordered by cluster id, not by timestamp: downstream consumers
deliberately receive the frames without chronological order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from cola.color import luv_frame_diff, rgb_to_luv
from cola.features import (
    FrameFeatures,
    brightness_score,
    color_histogram,
    entropy_score,
    laplacian_variance,
)
from cola.frames import Frame, encode_frame_png
from cola.kmeans import kmeans_cluster


@dataclass(frozen=True)
class SelectionParams:
    """Tunable thresholds of the selection pipeline.

    Every knob is configurable; the defaults pass natural footage and
    reject black or blank frames.
    """

    max_keyframes: int = 10
    luv_diff_threshold: float = 8.0
    brightness_min: float = 10.0
    brightness_max: float = 245.0
    entropy_min: float = 1.0
    histogram_bins_per_channel: int = 64
    kmeans_seed: int = 42
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.max_keyframes < 1:
            raise ValueError("max_keyframes must be >= 1")
        if not (0.0 <= self.brightness_min < self.brightness_max <= 255.0):
            raise ValueError("need 0 <= brightness_min < brightness_max <= 255")
        if not (0.0 <= self.entropy_min <= 8.0):
            raise ValueError("entropy_min must be in [0, 8]")
        if self.luv_diff_threshold < 0:
            raise ValueError("luv_diff_threshold must be non-negative")
        if self.histogram_bins_per_channel < 1:
            raise ValueError("histogram_bins_per_channel must be >= 1")
        if self.kmeans_max_iters < 1:
            raise ValueError("kmeans_max_iters must be >= 1")


@dataclass(frozen=True)
class Keyframe:
    frame: Frame
    features: FrameFeatures
    cluster_id: int
    source_video: str = ""


def _gates_pass(brightness: float, entropy: float, params: SelectionParams) -> bool:
    return (
        params.brightness_min <= brightness <= params.brightness_max
        and entropy >= params.entropy_min
    )


def candidate_filter(
    frames: Iterable[Frame], params: SelectionParams | None = None
) -> list[tuple[Frame, FrameFeatures]]:
    """Select candidate frames and compute their features.

    An empty stream yields an empty list.  Features (including histogram
    and Laplacian variance) are computed once per accepted candidate.
    """
    params = params or SelectionParams()
    candidates: list[tuple[Frame, FrameFeatures]] = []
    last_luv: np.ndarray | None = None
    for frame in frames:
        brightness = brightness_score(frame)
        entropy = entropy_score(frame)
        if not _gates_pass(brightness, entropy, params):
            continue
        luv = rgb_to_luv(frame)
        if last_luv is not None and luv_frame_diff(luv, last_luv) <= params.luv_diff_threshold:
            continue
        features = FrameFeatures(
            brightness=brightness,
            entropy=entropy,
            histogram=color_histogram(frame, params.histogram_bins_per_channel),
            laplacian_variance=laplacian_variance(frame),
        )
        candidates.append((frame, features))
        last_luv = luv
    return candidates


def select_keyframes(
    frames: Iterable[Frame],
    params: SelectionParams | None = None,
    video_id: str = "",
) -> list[Keyframe]:
    """Select at most ``params.max_keyframes`` keyframes from a stream.

    Deterministic: identical frame bytes, params, and seed produce
    identical keyframe indices.
    """
    params = params or SelectionParams()
    candidates = candidate_filter(frames, params)
    if not candidates:
        return []

    if len(candidates) <= params.max_keyframes:
        return [
            Keyframe(frame=frame, features=features, cluster_id=rank, source_video=video_id)
            for rank, (frame, features) in enumerate(candidates)
        ]

    histograms = np.stack([features.histogram for _, features in candidates])
    assignment, _ = kmeans_cluster(
        histograms,
        k=params.max_keyframes,
        seed=params.kmeans_seed,
        max_iters=params.kmeans_max_iters,
        tol=params.kmeans_tol,
    )
    keyframes = []
    for cluster_id in range(params.max_keyframes):
        members = [i for i in range(len(candidates)) if assignment[i] == cluster_id]
        best = max(
            members,
            key=lambda i: (candidates[i][1].laplacian_variance, -candidates[i][0].index),
        )
        frame, features = candidates[best]
        keyframes.append(
            Keyframe(frame=frame, features=features, cluster_id=cluster_id, source_video=video_id)
        )
    return keyframes


def save_keyframes(keyframes: list[Keyframe], out_dir: str | Path) -> Path:
    """Persist keyframes as ``<video_id>/kf_<cluster_id>.png`` plus a JSON manifest.

    Returns the per-video directory.  The manifest records features and
    timestamps for each keyframe.
    """
    if not keyframes:
        raise ValueError("no keyframes to save")
    video_id = keyframes[0].source_video or "video"
    video_dir = Path(out_dir) / video_id
    video_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for kf in keyframes:
        name = f"kf_{kf.cluster_id}.png"
        (video_dir / name).write_bytes(encode_frame_png(kf.frame))
        entries.append(
            {
                "file": name,
                "cluster_id": kf.cluster_id,
                "frame_index": kf.frame.index,
                "timestamp_ms": kf.frame.timestamp_ms,
                "features": kf.features.to_dict(),
            }
        )
    manifest = {"video_id": video_id, "keyframes": entries}
    (video_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return video_dir
