"""End-to-end runs: manifests in, keyframes/prompts/predictions/reports out.

A coordinator farms independent per-item jobs out to a bounded thread
pool (model latency dominates wall-clock), then reduces results in
manifest order so every output byte is a function of (manifest, config,
endpoint behavior, seed).  All intermediate artifacts persist under the
output directory: keyframes, rendered prompts, raw model responses, and
per-item predictions, so failures can be audited after the fact.
Re-running with a warm response cache touches the network zero times and
reproduces the outputs byte for byte.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from cola.config import DatasetManifest, HarItem, RunConfig, VqaItem, load_manifest
from cola.ensemble import ensemble_scores
from cola.frames import FrameSourceError, open_frame_source
from cola.gateway import GatewayError, ModelGateway
from cola.metrics import (
    ConfusionMatrix,
    PrfTable,
    confusion_matrix,
    mcq_accuracy,
    per_class_prf,
    write_report,
)
from cola.selection import save_keyframes, select_keyframes
from cola.templates import (
    FRAME_ACTION_QUESTION,
    HarContext,
    HarKeyframeBlock,
    PromptRecord,
    TemplateConfig,
    TemplateError,
    VqaContext,
    build_har_prompt,
    build_vqa_prompt,
    export_training_records,
    normalize_answer,
)

logger = logging.getLogger(__name__)

ITEM_ERRORS = (GatewayError, FrameSourceError, TemplateError, ValueError, OSError)


@dataclass(frozen=True)
class RunResult:
    """Outcome of a pipeline run, with full item accounting."""

    task: str
    mode: str | None
    items_total: int
    evaluated: int
    errored: int
    accuracy: float | None
    cm: ConfusionMatrix | None
    prf: PrfTable | None
    errors: tuple
    output_dir: Path

    def summary_dict(self) -> dict:
        summary = {
            "task": self.task,
            "items_total": self.items_total,
            "evaluated": self.evaluated,
            "errored": self.errored,
            "errors": [dict(e) for e in self.errors],
        }
        if self.mode is not None:
            summary["mode"] = self.mode
        if self.accuracy is not None:
            summary["accuracy"] = self.accuracy
        if self.prf is not None:
            summary["macro_f1"] = self.prf.macro_f1
        return summary


def _template_config(config: RunConfig) -> TemplateConfig:
    if config.template_version != TemplateConfig().version:
        raise ValueError(f"unknown template_version {config.template_version!r}")
    return TemplateConfig()


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fp:
        for row in rows:
            fp.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def _run_items(worker, items, parallel: int) -> list:
    """Run worker over items in a bounded pool; results in input order."""
    if parallel <= 1 or len(items) <= 1:
        return [worker(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(worker, items))


def _finalize(
    config: RunConfig,
    manifest: DatasetManifest,
    results: list,
    responses: list[dict],
    prompts: list[dict],
    predictions: list[dict],
    accuracy: float | None,
    cm: ConfusionMatrix | None,
    prf: PrfTable | None,
) -> RunResult:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    errors = tuple(r["error_record"] for r in results if "error_record" in r)
    result = RunResult(
        task=config.task,
        mode=config.mode if config.task == "vqa-mcq" else None,
        items_total=len(manifest.items),
        evaluated=len(manifest.items) - len(errors),
        errored=len(errors),
        accuracy=accuracy,
        cm=cm,
        prf=prf,
        errors=errors,
        output_dir=out,
    )
    _write_jsonl(out / "responses.jsonl", responses)
    _write_jsonl(out / "prompts.jsonl", prompts)
    _write_jsonl(out / "predictions.jsonl", predictions)
    write_report(cm, prf, accuracy, out)
    (out / "run_summary.json").write_text(
        json.dumps(result.summary_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return result


def run_har(config: RunConfig, gateway: ModelGateway | None = None) -> RunResult:
    """Keyframes -> per-frame VLM queries -> coordination prompt -> answer.

    Per-video failures are recorded and excluded from the metrics; the
    report always satisfies evaluated + errored = manifest size.
    """
    manifest = load_manifest(config.dataset_manifest, expected_task="har")
    gateway = gateway or ModelGateway(config.cache_dir)
    template_config = _template_config(config)
    vlms = config.vlm_endpoints()
    llm = config.generate_endpoint()
    classes = list(manifest.class_names)
    keyframe_dir = Path(config.output_dir) / "keyframes"

    def worker(item: HarItem) -> dict:
        try:
            stream = open_frame_source(item.source)
            keyframes = select_keyframes(stream, config.selection, video_id=item.video_id)
            if not keyframes:
                raise ValueError(f"no keyframes selected for video {item.video_id}")
            save_keyframes(keyframes, keyframe_dir)
            blocks = []
            responses = []
            for kf in keyframes:
                captions = {}
                actions = {}
                for vlm in vlms:
                    cap = gateway.caption(vlm, kf.frame)
                    ans = gateway.vqa_answer(vlm, kf.frame, FRAME_ACTION_QUESTION)
                    captions[vlm.name] = cap.text
                    actions[vlm.name] = ans.text
                    responses.extend(
                        [
                            {"video_id": item.video_id, "cluster_id": kf.cluster_id,
                             "endpoint": vlm.name, "kind": "caption", "text": cap.text},
                            {"video_id": item.video_id, "cluster_id": kf.cluster_id,
                             "endpoint": vlm.name, "kind": "vqa", "text": ans.text},
                        ]
                    )
                blocks.append(
                    HarKeyframeBlock(
                        cluster_id=kf.cluster_id, captions=captions, action_answers=actions
                    )
                )
            ctx = HarContext(
                video_id=item.video_id, blocks=tuple(blocks),
                class_names=tuple(classes),
            )
            record = build_har_prompt(ctx, template_config)
            generated = gateway.generate(llm, record.prompt_text).text
            responses.append(
                {"video_id": item.video_id, "endpoint": llm.name,
                 "kind": "generate", "text": generated}
            )
            pred_idx = normalize_answer(generated, classes)
            return {
                "item": item,
                "responses": responses,
                "prompt": {"video_id": item.video_id, "prompt": record.prompt_text,
                           "provenance": record.provenance},
                "prediction": {
                    "video_id": item.video_id,
                    "gold": item.action_label,
                    "generated": generated,
                    "predicted": classes[pred_idx] if pred_idx is not None else None,
                },
            }
        except ITEM_ERRORS as exc:
            logger.warning("video %s failed: %s", item.video_id, exc)
            return {
                "item": item,
                "error_record": {"video_id": item.video_id, "error": str(exc)},
            }

    results = _run_items(worker, list(manifest.items), config.parallel_videos)
    responses = [row for r in results for row in r.get("responses", ())]
    prompts = [r["prompt"] for r in results if "prompt" in r]
    predictions = [r["prediction"] for r in results if "prediction" in r]
    preds = [p["predicted"] for p in predictions]
    golds = [p["gold"] for p in predictions]
    cm = confusion_matrix(preds, golds, classes)
    prf = per_class_prf(cm)
    return _finalize(
        config, manifest, results, responses, prompts, predictions,
        accuracy=cm.accuracy(), cm=cm, prf=prf,
    )


def run_vqa(config: RunConfig, gateway: ModelGateway | None = None) -> RunResult:
    """Multiple-choice VQA, in ensemble or coordination (cola) mode."""
    manifest = load_manifest(config.dataset_manifest, expected_task="vqa-mcq")
    gateway = gateway or ModelGateway(config.cache_dir)
    mode = config.mode
    template_config = _template_config(config)
    if mode == "ensemble":
        vlms = config.vqa_endpoints()
        embedder = gateway.embedder(config.embed_endpoint())
        llm = None
    else:
        vlms = config.vlm_endpoints()
        llm = config.generate_endpoint()

    def worker(item: VqaItem) -> dict:
        try:
            image = item.image_path.read_bytes()
            responses = []
            answers = {}
            for vlm in vlms:
                ans = gateway.vqa_answer(vlm, image, item.question, item.choices)
                answers[vlm.name] = ans.text
                responses.append(
                    {"item_id": item.item_id, "endpoint": vlm.name,
                     "kind": "vqa", "text": ans.text}
                )
            prompt_row = None
            if mode == "ensemble":
                scores = ensemble_scores(answers, item.choices, embedder)
                pred_idx = scores.chosen_index
                generated = None
                score_list = [float(s) for s in scores.scores]
            else:
                captions = {}
                for vlm in vlms:
                    cap = gateway.caption(vlm, image)
                    captions[vlm.name] = cap.text
                    responses.append(
                        {"item_id": item.item_id, "endpoint": vlm.name,
                         "kind": "caption", "text": cap.text}
                    )
                ctx = VqaContext(
                    captions=captions, question=item.question,
                    choices=item.choices, plausible_answers=answers,
                )
                record = build_vqa_prompt(
                    ctx, template_config, provenance={"item_id": item.item_id}
                )
                generated = gateway.generate(llm, record.prompt_text).text
                responses.append(
                    {"item_id": item.item_id, "endpoint": llm.name,
                     "kind": "generate", "text": generated}
                )
                pred_idx = normalize_answer(generated, list(item.choices))
                score_list = None
                prompt_row = {"item_id": item.item_id, "prompt": record.prompt_text,
                              "provenance": record.provenance}
            prediction = {
                "item_id": item.item_id,
                "gold_idx": item.correct_choice_idx,
                "predicted_idx": pred_idx,
            }
            if generated is not None:
                prediction["generated"] = generated
            if score_list is not None:
                prediction["scores"] = score_list
            out = {"item": item, "responses": responses, "prediction": prediction}
            if prompt_row is not None:
                out["prompt"] = prompt_row
            return out
        except ITEM_ERRORS as exc:
            logger.warning("item %s failed: %s", item.item_id, exc)
            return {
                "item": item,
                "error_record": {"item_id": item.item_id, "error": str(exc)},
            }

    results = _run_items(worker, list(manifest.items), config.parallel_videos)
    responses = [row for r in results for row in r.get("responses", ())]
    prompts = [r["prompt"] for r in results if "prompt" in r]
    predictions = [r["prediction"] for r in results if "prediction" in r]
    accuracy = mcq_accuracy(
        [p["predicted_idx"] for p in predictions],
        [p["gold_idx"] for p in predictions],
    )
    return _finalize(
        config, manifest, results, responses, prompts, predictions,
        accuracy=accuracy, cm=None, prf=None,
    )


def export_training_data(config: RunConfig, gateway: ModelGateway | None = None) -> Path:
    """Run the pipeline up to prompt construction and export prompt/target
    JSONL records for external fine-tuning; no generate calls are made."""
    manifest = load_manifest(config.dataset_manifest, expected_task="har")
    gateway = gateway or ModelGateway(config.cache_dir)
    template_config = _template_config(config)
    vlms = config.vlm_endpoints()
    if not vlms:
        raise ValueError("training export needs at least one caption+vqa endpoint")

    def worker(item: HarItem) -> PromptRecord:
        stream = open_frame_source(item.source)
        keyframes = select_keyframes(stream, config.selection, video_id=item.video_id)
        if not keyframes:
            raise ValueError(f"no keyframes selected for video {item.video_id}")
        blocks = []
        for kf in keyframes:
            captions = {vlm.name: gateway.caption(vlm, kf.frame).text for vlm in vlms}
            actions = {
                vlm.name: gateway.vqa_answer(vlm, kf.frame, FRAME_ACTION_QUESTION).text
                for vlm in vlms
            }
            blocks.append(
                HarKeyframeBlock(
                    cluster_id=kf.cluster_id, captions=captions, action_answers=actions
                )
            )
        ctx = HarContext(
            video_id=item.video_id, blocks=tuple(blocks),
            class_names=tuple(manifest.class_names),
        )
        record = build_har_prompt(ctx, template_config)
        return PromptRecord(
            prompt_text=record.prompt_text,
            provenance=record.provenance,
            target=item.action_label,
        )

    records = _run_items(worker, list(manifest.items), config.parallel_videos)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return export_training_records(records, out / "train.jsonl")
