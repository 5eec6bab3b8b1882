"""Synthetic frames, videos, and gold-echo fixture bundles.

Everything here is seeded and deterministic.  Scene frames are built
from a fixed multiset of pixel values (base color plus quantized noise),
so two frames of the same scene can differ in spatial arrangement --
smooth gradients read as blurred, scrambled arrangements read as sharp --
while keeping byte-identical color histograms.  Scene base colors come
from a greedy farthest-point palette, so any two scenes sit far apart in
LUV space and reliably trip the candidate diff gate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cola.color import luma, rgb_to_luv
from cola.frames import Frame, encode_frame_png, write_framestream
from cola.gateway import request_digest
from cola.selection import SelectionParams, select_keyframes
from cola.templates import (
    DEFAULT_TEMPLATE_CONFIG,
    FRAME_ACTION_QUESTION,
    HarContext,
    HarKeyframeBlock,
    VqaContext,
    build_har_prompt,
    build_vqa_prompt,
)

DEFAULT_SIZE = (32, 24)  # (width, height): small enough for fast suites


def well_separated_palette(
    n: int, seed: int = 7, min_mean_abs_luv: float = 14.0
) -> list[tuple[int, int, int]]:
    """Greedy farthest-point palette of RGB base colors.

    Any two palette entries, rendered as solid frames, differ by more
    than ``min_mean_abs_luv`` mean absolute LUV units.
    """
    rng = np.random.default_rng(seed)
    pool = rng.integers(40, 216, size=(4096, 3))
    pool_luv = rgb_to_luv(pool.astype(np.uint8).reshape(1, -1, 3))[0]
    chosen = [0]
    dist = np.mean(np.abs(pool_luv - pool_luv[0]), axis=1)
    while len(chosen) < n:
        nxt = int(np.argmax(dist))
        if dist[nxt] <= min_mean_abs_luv:
            raise ValueError(f"cannot build {n} colors with separation {min_mean_abs_luv}")
        chosen.append(nxt)
        dist = np.minimum(dist, np.mean(np.abs(pool_luv - pool_luv[nxt]), axis=1))
    return [tuple(int(v) for v in pool[i]) for i in chosen]


def scene_pixel_values(
    rng: np.random.Generator,
    n_pixels: int,
    base_rgb: tuple[int, int, int],
    noise: int = 10,
) -> np.ndarray:
    """Canonical (sorted) pixel multiset of a scene, shape (n, 3) uint8."""
    base = np.asarray(base_rgb, dtype=np.int64)
    values = base + rng.integers(-noise, noise + 1, size=(n_pixels, 3))
    values = np.clip(values, 0, 255).astype(np.uint8)
    order = np.lexsort((values[:, 2], values[:, 1], values[:, 0]))
    return values[order]


def arrange_smooth(values: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Lay pixel values out as a luma gradient (low Laplacian response)."""
    w, h = size
    order = np.argsort(luma(values.reshape(1, -1, 3))[0], kind="stable")
    return values[order].reshape(h, w, 3)


def arrange_scrambled(
    values: np.ndarray, size: tuple[int, int], rng: np.random.Generator
) -> np.ndarray:
    """Lay pixel values out in random order (high Laplacian response)."""
    w, h = size
    return values[rng.permutation(len(values))].reshape(h, w, 3)


def make_frame(pixels: np.ndarray, index: int, fps: float = 25.0) -> Frame:
    return Frame(index=index, timestamp_ms=round(index * 1000.0 / fps), pixels=pixels)


def synthetic_video(
    n_scenes: int,
    frames_per_scene: int = 2,
    size: tuple[int, int] = DEFAULT_SIZE,
    seed: int = 0,
    noise: int = 10,
    scramble: bool = False,
    palette: list[tuple[int, int, int]] | None = None,
) -> list[Frame]:
    """A scene-structured synthetic video.

    With ``scramble=False`` all frames of a scene share bytes, so the
    candidate filter keeps exactly one frame per scene; with
    ``scramble=True`` each frame is a fresh arrangement of the scene's
    pixel multiset and every frame clears the diff gate.
    """
    rng = np.random.default_rng(seed)
    palette = palette or well_separated_palette(max(n_scenes, 2))
    if n_scenes > len(palette):
        raise ValueError(f"palette has only {len(palette)} scenes")
    w, h = size
    frames: list[Frame] = []
    for scene in range(n_scenes):
        values = scene_pixel_values(rng, w * h, palette[scene], noise)
        base = arrange_smooth(values, size)
        for rep in range(frames_per_scene):
            if scramble:
                pixels = arrange_scrambled(values, size, rng)
            else:
                pixels = base
            frames.append(make_frame(pixels, index=len(frames)))
    return frames


# ---------------------------------------------------------------------------
# Gold-echo fixture bundle: a tiny offline dataset plus a mock-server fixture
# file whose answers make every pipeline prediction correct.
# ---------------------------------------------------------------------------

VLM_NAMES = ("vlm-a", "vlm-b")

VQA_ITEMS = (
    ("q0", "What is the dominant tone of the image?", ("warm", "cool", "neutral", "harsh"), 1),
    ("q1", "How busy does the scene look?", ("empty", "sparse", "crowded", "chaotic"), 2),
    ("q2", "What lighting does the image have?", ("daylight", "dusk", "night", "studio"), 0),
    ("q3", "What texture dominates the frame?", ("smooth", "grainy", "striped", "checkered"), 1),
    ("q4", "Which weather fits the scene?", ("sunny", "foggy", "rainy", "snowy"), 3),
)

HAR_CLASSES = ("walking", "running", "waving")

HAR_VIDEOS = (
    ("v0", "walking", 2),
    ("v1", "running", 3),
    ("v2", "waving", 2),
)


@dataclass(frozen=True)
class FixtureBundle:
    root: Path
    vqa_manifest: Path
    har_manifest: Path
    fixtures: Path
    selection: SelectionParams


def _caption_for(item_id: str) -> str:
    return f"a synthetic test pattern ({item_id})"


def build_fixture_bundle(root: str | Path, seed: int = 2024) -> FixtureBundle:
    """Write images, framestream videos, manifests, and gold-echo fixtures.

    The fixture file scripts the mock server so that captions are fixed
    per image, VQA answers echo the gold choice or action label, and the
    coordination prompts (rendered here exactly as the pipeline renders
    them) map to the gold answer at the generate route.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "videos").mkdir(parents=True, exist_ok=True)
    palette = well_separated_palette(16, seed=5)
    rng = np.random.default_rng(seed)
    selection = SelectionParams()
    responses: dict[str, str] = {}

    # VQA items: one image each; both VLMs caption it and answer with the
    # gold choice text, and the rendered coordination prompt answers gold.
    vqa_rows = []
    for i, (item_id, question, choices, gold_idx) in enumerate(VQA_ITEMS):
        values = scene_pixel_values(rng, DEFAULT_SIZE[0] * DEFAULT_SIZE[1], palette[i])
        image = arrange_scrambled(values, DEFAULT_SIZE, rng)
        png = encode_frame_png(image)
        path = root / "images" / f"{item_id}.png"
        path.write_bytes(png)
        gold_text = choices[gold_idx]
        responses[request_digest("caption", image_bytes=png)] = _caption_for(item_id)
        responses[
            request_digest("vqa", image_bytes=png, text=question, choices=choices)
        ] = gold_text
        ctx = VqaContext(
            captions={name: _caption_for(item_id) for name in VLM_NAMES},
            question=question,
            choices=choices,
            plausible_answers={name: gold_text for name in VLM_NAMES},
        )
        prompt = build_vqa_prompt(ctx, DEFAULT_TEMPLATE_CONFIG).prompt_text
        responses[request_digest("generate", text=prompt)] = gold_text
        vqa_rows.append(
            {
                "item_id": item_id,
                "image_path": str(path.relative_to(root)),
                "question": question,
                "choices": list(choices),
                "correct_choice_idx": gold_idx,
            }
        )

    # HAR videos: scene-structured framestreams; selection is re-run here
    # so caption/vqa fixtures key on the exact keyframe PNG bytes.
    har_rows = []
    for v, (video_id, label, n_scenes) in enumerate(HAR_VIDEOS):
        frames = synthetic_video(
            n_scenes, frames_per_scene=2, seed=seed + 100 + v,
            palette=palette[8:], scramble=False,
        )
        path = root / "videos" / f"{video_id}.fs"
        with path.open("wb") as fp:
            write_framestream(fp, frames, fps=25.0)
        keyframes = select_keyframes(iter(frames), selection, video_id=video_id)
        blocks = []
        for kf in keyframes:
            png = encode_frame_png(kf.frame)
            caption = f"scene {kf.cluster_id} of {video_id}"
            responses[request_digest("caption", image_bytes=png)] = caption
            responses[
                request_digest("vqa", image_bytes=png, text=FRAME_ACTION_QUESTION)
            ] = label
            blocks.append(
                HarKeyframeBlock(
                    cluster_id=kf.cluster_id,
                    captions={name: caption for name in VLM_NAMES},
                    action_answers={name: label for name in VLM_NAMES},
                )
            )
        ctx = HarContext(video_id=video_id, blocks=tuple(blocks), class_names=HAR_CLASSES)
        prompt = build_har_prompt(ctx, DEFAULT_TEMPLATE_CONFIG).prompt_text
        responses[request_digest("generate", text=prompt)] = label
        har_rows.append(
            {
                "video_id": video_id,
                "source": {"kind": "framestream", "uri": str(path.relative_to(root))},
                "action_label": label,
            }
        )

    vqa_manifest = root / "vqa_manifest.json"
    vqa_manifest.write_text(
        json.dumps({"task": "vqa-mcq", "split": "fixture", "items": vqa_rows},
                   indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    har_manifest = root / "har_manifest.json"
    har_manifest.write_text(
        json.dumps(
            {
                "task": "har",
                "split": "fixture",
                "class_names": list(HAR_CLASSES),
                "items": har_rows,
            },
            indent=2, sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )
    fixtures = root / "fixtures.json"
    fixtures.write_text(
        json.dumps({"responses": responses}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return FixtureBundle(
        root=root, vqa_manifest=vqa_manifest, har_manifest=har_manifest,
        fixtures=fixtures, selection=selection,
    )
