"""Declarative run configuration and dataset manifests.

Runs are described by a TOML file with a ``[run]`` table, an optional
``[selection]`` table, and an ``[[endpoints]]`` array:

    [run]
    task = "har"                # or "vqa-mcq"
    mode = "cola"               # vqa-mcq only: "ensemble" or "cola"
    dataset_manifest = "har_manifest.json"
    output_dir = "out"
    cache_dir = "cache"
    parallel_videos = 4
    seed = 42

    [selection]
    max_keyframes = 10

    [[endpoints]]
    name = "vlm-a"
    base_url = "http://127.0.0.1:8081"
    capabilities = ["caption", "vqa"]

Scalar keys in ``[run]`` and ``[selection]`` can be overridden from the
environment with ``COLA_<SECTION>__<KEY>`` (for example
``COLA_RUN__OUTPUT_DIR=/tmp/out``).

Dataset manifests are JSON.  VQA rows carry item_id, image_path,
question, choices, and correct_choice_idx; HAR manifests declare the
class vocabulary in a header and rows carry video_id, source, and
action_label.  Manifests carry an explicit ``split`` field rather than
implying one.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from cola.frames import FrameSource
from cola.gateway import ModelEndpoint
from cola.selection import SelectionParams
from cola.templates import TEMPLATE_VERSION

ENV_PREFIX = "COLA_"

TASKS = ("vqa-mcq", "har")
VQA_MODES = ("ensemble", "cola")


class ConfigError(ValueError):
    """Invalid run configuration or dataset manifest."""


@dataclass(frozen=True)
class RunConfig:
    task: str
    dataset_manifest: Path
    output_dir: Path
    cache_dir: Path
    endpoints: tuple
    selection: SelectionParams = field(default_factory=SelectionParams)
    mode: str = "cola"
    template_version: str = TEMPLATE_VERSION
    parallel_videos: int = 4
    seed: int = 42

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.task == "vqa-mcq" and self.mode not in VQA_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {VQA_MODES}")
        if self.parallel_videos < 1:
            raise ConfigError("parallel_videos must be >= 1")
        names = [e.name for e in self.endpoints]
        if len(set(names)) != len(names):
            raise ConfigError("endpoint names must be unique")
        self._check_capabilities()

    def _check_capabilities(self) -> None:
        vlms = self.vlm_endpoints()
        generators = [e for e in self.endpoints if "generate" in e.capabilities]
        if self.task == "har" or (self.task == "vqa-mcq" and self.mode == "cola"):
            if not vlms:
                raise ConfigError("need at least one endpoint with caption and vqa capabilities")
            if len(generators) != 1:
                raise ConfigError(
                    f"the coordination path needs exactly one generate-capable "
                    f"endpoint, found {len(generators)}"
                )
        if self.task == "vqa-mcq" and self.mode == "ensemble":
            if not any("vqa" in e.capabilities for e in self.endpoints):
                raise ConfigError("ensemble mode needs at least one vqa-capable endpoint")
            if not any("embed" in e.capabilities for e in self.endpoints):
                raise ConfigError("ensemble mode needs an embed-capable endpoint")

    def vlm_endpoints(self) -> list[ModelEndpoint]:
        named = [e for e in self.endpoints if {"caption", "vqa"} <= set(e.capabilities)]
        return sorted(named, key=lambda e: e.name)

    def vqa_endpoints(self) -> list[ModelEndpoint]:
        return sorted(
            (e for e in self.endpoints if "vqa" in e.capabilities), key=lambda e: e.name
        )

    def generate_endpoint(self) -> ModelEndpoint:
        return next(e for e in self.endpoints if "generate" in e.capabilities)

    def embed_endpoint(self) -> ModelEndpoint:
        try:
            return next(e for e in self.endpoints if "embed" in e.capabilities)
        except StopIteration:
            raise ConfigError("no embed-capable endpoint configured") from None


def _parse_env_value(raw: str):
    lowered = raw.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def apply_env_overrides(tree: dict, environ: dict | None = None) -> dict:
    """Fold COLA_<SECTION>__<KEY> environment variables into the config tree."""
    environ = os.environ if environ is None else environ
    for key, value in environ.items():
        if not key.startswith(ENV_PREFIX) or "__" not in key:
            continue
        section, _, name = key[len(ENV_PREFIX):].partition("__")
        section, name = section.lower(), name.lower()
        if not section or not name:
            continue
        node = tree.setdefault(section, {})
        if isinstance(node, dict):
            node[name] = _parse_env_value(value)
    return tree


def _build_endpoint(table: dict, position: int) -> ModelEndpoint:
    try:
        return ModelEndpoint(
            name=table["name"],
            base_url=table["base_url"],
            capabilities=frozenset(table.get("capabilities", ())),
            timeout_ms=int(table.get("timeout_ms", 30000)),
            max_retries=int(table.get("max_retries", 3)),
            max_concurrency=int(table.get("max_concurrency", 4)),
            backoff_ms=int(table.get("backoff_ms", 250)),
            max_prompt_chars=table.get("max_prompt_chars"),
            bearer_token=table.get("bearer_token"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"endpoint #{position}: {exc}") from exc


def config_from_tree(tree: dict, base_dir: Path | None = None) -> RunConfig:
    """Build a validated RunConfig from a parsed TOML tree."""
    base = base_dir or Path.cwd()
    run = tree.get("run")
    if not isinstance(run, dict):
        raise ConfigError("config needs a [run] table")
    try:
        task = run["task"]
        manifest = run["dataset_manifest"]
    except KeyError as exc:
        raise ConfigError(f"[run] is missing required key {exc}") from exc
    endpoints = tuple(
        _build_endpoint(t, i) for i, t in enumerate(tree.get("endpoints", ()))
    )
    if not endpoints:
        raise ConfigError("config needs at least one [[endpoints]] table")
    selection_table = tree.get("selection", {})
    valid_fields = {f.name for f in fields(SelectionParams)}
    unknown = set(selection_table) - valid_fields
    if unknown:
        raise ConfigError(f"unknown [selection] keys: {sorted(unknown)}")
    try:
        selection = SelectionParams(**selection_table)
    except ValueError as exc:
        raise ConfigError(f"[selection]: {exc}") from exc

    def _resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    try:
        return RunConfig(
            task=task,
            mode=run.get("mode", "cola"),
            dataset_manifest=_resolve(manifest),
            output_dir=_resolve(run.get("output_dir", "out")),
            cache_dir=_resolve(run.get("cache_dir", "cache")),
            endpoints=endpoints,
            selection=selection,
            template_version=run.get("template_version", TEMPLATE_VERSION),
            parallel_videos=int(run.get("parallel_videos", 4)),
            seed=int(run.get("seed", 42)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, environ: dict | None = None) -> RunConfig:
    """Parse a TOML config file, apply env overrides, and validate."""
    path = Path(path)
    try:
        tree = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    tree = apply_env_overrides(tree, environ)
    return config_from_tree(tree, base_dir=path.parent)


# --------------------------------------------------------------------------
# Dataset manifests
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VqaItem:
    item_id: str
    image_path: Path
    question: str
    choices: tuple
    correct_choice_idx: int


@dataclass(frozen=True)
class HarItem:
    video_id: str
    source: FrameSource
    action_label: str


@dataclass(frozen=True)
class DatasetManifest:
    task: str
    split: str
    items: tuple
    class_names: tuple = ()


def _source_from_row(raw, base: Path, fps_hint: float | None = None) -> FrameSource:
    try:
        if isinstance(raw, str):
            path = Path(raw)
            path = path if path.is_absolute() else base / path
            kind = "image-directory" if path.is_dir() else "framestream"
            return FrameSource(kind=kind, uri=str(path), fps_hint=fps_hint)
        if isinstance(raw, dict):
            kind = raw.get("kind", "framestream")
            uri = raw.get("uri")
            if not uri:
                raise ConfigError("video source object needs a 'uri'")
            if kind in ("image-directory", "framestream"):
                path = Path(uri)
                uri = str(path if path.is_absolute() else base / path)
            return FrameSource(
                kind=kind,
                uri=uri,
                fps_hint=raw.get("fps_hint", fps_hint),
                decoder_cmd=raw.get("decoder_cmd"),
            )
    except ValueError as exc:
        raise ConfigError(f"invalid video source spec: {exc}") from exc
    raise ConfigError(f"unsupported video source spec: {raw!r}")


def load_manifest(path: str | Path, expected_task: str | None = None) -> DatasetManifest:
    """Parse and validate a dataset manifest file."""
    path = Path(path)
    base = path.parent
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from exc
    task = payload.get("task")
    if task not in TASKS:
        raise ConfigError(f"manifest task must be one of {TASKS}, got {task!r}")
    if expected_task is not None and task != expected_task:
        raise ConfigError(f"manifest task {task!r} does not match configured task {expected_task!r}")
    rows = payload.get("items")
    if not isinstance(rows, list):
        raise ConfigError("manifest needs an 'items' array")
    split = payload.get("split", "unspecified")

    if task == "vqa-mcq":
        items = []
        for i, row in enumerate(rows):
            try:
                choices = tuple(row["choices"])
                gold = int(row["correct_choice_idx"])
                if not (0 <= gold < len(choices)):
                    raise ConfigError(
                        f"item {i}: correct_choice_idx {gold} out of range for "
                        f"{len(choices)} choices"
                    )
                image_path = Path(row["image_path"])
                items.append(
                    VqaItem(
                        item_id=str(row["item_id"]),
                        image_path=image_path if image_path.is_absolute() else base / image_path,
                        question=row["question"],
                        choices=choices,
                        correct_choice_idx=gold,
                    )
                )
            except KeyError as exc:
                raise ConfigError(f"vqa item {i} is missing key {exc}") from exc
        return DatasetManifest(task=task, split=split, items=tuple(items))

    class_names = tuple(payload.get("class_names", ()))
    if not class_names:
        raise ConfigError("har manifest needs a class_names header")
    if len(set(class_names)) != len(class_names):
        raise ConfigError("class_names must be pairwise distinct")
    items = []
    for i, row in enumerate(rows):
        try:
            label = row["action_label"]
            if label not in class_names:
                raise ConfigError(f"har item {i}: label {label!r} not in class_names")
            items.append(
                HarItem(
                    video_id=str(row["video_id"]),
                    source=_source_from_row(row["source"], base, row.get("fps_hint")),
                    action_label=label,
                )
            )
        except KeyError as exc:
            raise ConfigError(f"har item {i} is missing key {exc}") from exc
    return DatasetManifest(task=task, split=split, items=tuple(items), class_names=class_names)
