"""Coordination prompt rendering, parsing, and answer normalization.

The canonical prompt grammar (versioned ``cola-v1``) is line-oriented
UTF-8.  For multiple-choice VQA over one image:

    INSTRUCTION: <text>
    Context [<endpoint>]: <caption>          one line per endpoint
    Question: <text>
    Choices: (a) <c1> (b) <c2> ...
    Plausible answer [<endpoint>]: <answer>  one line per endpoint
    Answer:

For whole-video action recognition the per-endpoint lines are grouped
under ``Frame <k>:`` blocks instead:

    INSTRUCTION: <text>
    Frame 0:
    Caption [<endpoint>]: <caption>
    Action [<endpoint>]: <answer>
    ...
    Question: <text>
    Choices: (a) <class1> (b) <class2> ...
    Answer:

Endpoint lines appear in lexicographic endpoint-name order so identical
contexts always render to identical bytes.  ``parse_vqa_prompt`` and
``parse_har_prompt`` invert the renderers exactly on valid contexts.

Valid field texts are single-line, nonempty, and carry no surrounding
whitespace; choice texts additionally may not contain a choice-marker
pattern like ``(b) ``.  The instruction wording is configuration, not
contract: only the field structure is fixed by the grammar version.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

TEMPLATE_VERSION = "cola-v1"

DEFAULT_VQA_INSTRUCTION = (
    "Several vision models have looked at one image. Each reports a context "
    "describing the image and a plausible answer to the question. Coordinate "
    "their reports and answer the question with exactly one of the choices."
)
DEFAULT_HAR_INSTRUCTION = (
    "Several vision models have looked at keyframes sampled from one video. "
    "The frames are not in chronological order. Each model reports a caption "
    "and an action guess for every frame. Coordinate their reports and answer "
    "the question with exactly one of the choices."
)
HAR_QUESTION = "What action is happening in the video?"

# The question every vision model is asked about every keyframe.
FRAME_ACTION_QUESTION = "What action is happening in the frame?"

_MARKERS = string.ascii_lowercase
_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")
_CHOICE_MARKER_RE = re.compile(r"\([a-z]\) ")
_CONTEXT_RE = re.compile(r"^Context \[([^\]]+)\]: (.*)$")
_PLAUSIBLE_RE = re.compile(r"^Plausible answer \[([^\]]+)\]: (.*)$")
_FRAME_RE = re.compile(r"^Frame (\d+):$")
_CAPTION_RE = re.compile(r"^Caption \[([^\]]+)\]: (.*)$")
_ACTION_RE = re.compile(r"^Action \[([^\]]+)\]: (.*)$")


class TemplateError(ValueError):
    """Raised on invalid contexts or unparseable prompt text."""


@dataclass(frozen=True)
class TemplateConfig:
    """Versioned wording of the fixed-structure prompts."""

    version: str = TEMPLATE_VERSION
    vqa_instruction: str = DEFAULT_VQA_INSTRUCTION
    har_instruction: str = DEFAULT_HAR_INSTRUCTION
    har_question: str = HAR_QUESTION


DEFAULT_TEMPLATE_CONFIG = TemplateConfig()


@dataclass(frozen=True)
class VqaContext:
    """Per-endpoint captions and plausible answers around one question."""

    captions: dict
    question: str
    choices: tuple
    plausible_answers: dict

    def __post_init__(self) -> None:
        object.__setattr__(self, "captions", dict(self.captions))
        object.__setattr__(self, "choices", tuple(self.choices))
        object.__setattr__(self, "plausible_answers", dict(self.plausible_answers))
        if not self.captions:
            raise TemplateError("VQA context needs at least one caption")
        if not self.plausible_answers:
            raise TemplateError("VQA context needs at least one plausible answer")
        for name in list(self.captions) + list(self.plausible_answers):
            _check_endpoint_name(name)
        for text in list(self.captions.values()) + list(self.plausible_answers.values()):
            _check_field_text(text, "caption/answer")
        _check_field_text(self.question, "question")
        _check_choices(self.choices)


@dataclass(frozen=True)
class HarKeyframeBlock:
    """Per-endpoint outputs for one keyframe."""

    cluster_id: int
    captions: dict
    action_answers: dict

    def __post_init__(self) -> None:
        object.__setattr__(self, "captions", dict(self.captions))
        object.__setattr__(self, "action_answers", dict(self.action_answers))
        if not self.captions or not self.action_answers:
            raise TemplateError("keyframe block needs at least one caption and one action answer")
        for name in list(self.captions) + list(self.action_answers):
            _check_endpoint_name(name)
        for text in list(self.captions.values()) + list(self.action_answers.values()):
            _check_field_text(text, "caption/answer")


@dataclass(frozen=True)
class HarContext:
    """Collated keyframe blocks plus the action vocabulary of one video."""

    video_id: str
    blocks: tuple
    class_names: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if not self.blocks:
            raise TemplateError("HAR context needs at least one keyframe block")
        _check_choices(self.class_names)


@dataclass(frozen=True)
class PromptRecord:
    """A rendered prompt plus its provenance and optional gold target."""

    prompt_text: str
    provenance: dict = field(default_factory=dict)
    target: str | None = None


def _check_endpoint_name(name: str) -> None:
    if not _NAME_RE.match(name or ""):
        raise TemplateError(f"invalid endpoint name {name!r}")


def _check_field_text(text: str, what: str) -> None:
    if not isinstance(text, str) or not text or text != text.strip() or "\n" in text:
        raise TemplateError(f"invalid {what} text {text!r}: must be single-line, "
                            "nonempty, with no surrounding whitespace")


def _check_choices(choices: Sequence[str]) -> None:
    if not choices:
        raise TemplateError("choices must be nonempty")
    if len(choices) > len(_MARKERS):
        raise TemplateError(f"at most {len(_MARKERS)} choices supported")
    if len(set(choices)) != len(choices):
        raise TemplateError("choices must be pairwise distinct")
    for choice in choices:
        _check_field_text(choice, "choice")
        if _CHOICE_MARKER_RE.search(choice):
            raise TemplateError(f"choice {choice!r} contains a marker-like pattern")


def render_choices_line(choices: Sequence[str]) -> str:
    _check_choices(choices)
    parts = [f"({_MARKERS[i]}) {choice}" for i, choice in enumerate(choices)]
    return "Choices: " + " ".join(parts)


def parse_choices_line(line: str) -> list[str]:
    if not line.startswith("Choices: "):
        raise TemplateError(f"expected a Choices line, got {line!r}")
    rest = " " + line[len("Choices: "):]
    pieces = re.split(r" \(([a-z])\) ", rest)
    # re.split yields ['', marker, text, marker, text, ...]
    if len(pieces) < 3 or pieces[0] != "":
        raise TemplateError(f"unparseable Choices line: {line!r}")
    markers, choices = pieces[1::2], pieces[2::2]
    if markers != list(_MARKERS[: len(markers)]):
        raise TemplateError(f"choice markers out of order in {line!r}")
    _check_choices(choices)
    return choices


def build_vqa_prompt(
    ctx: VqaContext,
    config: TemplateConfig = DEFAULT_TEMPLATE_CONFIG,
    provenance: Mapping | None = None,
) -> PromptRecord:
    """Render a multiple-choice VQA coordination prompt."""
    lines = [f"INSTRUCTION: {config.vqa_instruction}"]
    for name in sorted(ctx.captions):
        lines.append(f"Context [{name}]: {ctx.captions[name]}")
    lines.append(f"Question: {ctx.question}")
    lines.append(render_choices_line(ctx.choices))
    for name in sorted(ctx.plausible_answers):
        lines.append(f"Plausible answer [{name}]: {ctx.plausible_answers[name]}")
    lines.append("Answer:")
    prov = {
        "template_version": config.version,
        "endpoint_names": sorted(set(ctx.captions) | set(ctx.plausible_answers)),
    }
    prov.update(provenance or {})
    return PromptRecord(prompt_text="\n".join(lines), provenance=prov)


def build_har_prompt(
    ctx: HarContext,
    config: TemplateConfig = DEFAULT_TEMPLATE_CONFIG,
    provenance: Mapping | None = None,
) -> PromptRecord:
    """Render an action-recognition prompt from collated keyframe blocks.

    Blocks appear in the order provided (keyframe selection emits them in
    cluster order, not chronological order), numbered from 0.
    """
    lines = [f"INSTRUCTION: {config.har_instruction}"]
    names = set()
    for position, block in enumerate(ctx.blocks):
        lines.append(f"Frame {position}:")
        for name in sorted(block.captions):
            lines.append(f"Caption [{name}]: {block.captions[name]}")
        for name in sorted(block.action_answers):
            lines.append(f"Action [{name}]: {block.action_answers[name]}")
        names.update(block.captions)
        names.update(block.action_answers)
    lines.append(f"Question: {config.har_question}")
    lines.append(render_choices_line(ctx.class_names))
    lines.append("Answer:")
    prov = {
        "template_version": config.version,
        "video_id": ctx.video_id,
        "endpoint_names": sorted(names),
    }
    prov.update(provenance or {})
    return PromptRecord(prompt_text="\n".join(lines), provenance=prov)


def parse_vqa_prompt(text: str) -> tuple[str, VqaContext]:
    """Invert :func:`build_vqa_prompt`; returns (instruction, context)."""
    lines = text.split("\n")
    if len(lines) < 5 or not lines[0].startswith("INSTRUCTION: "):
        raise TemplateError("prompt does not start with an INSTRUCTION line")
    instruction = lines[0][len("INSTRUCTION: "):]
    i = 1
    captions = {}
    while i < len(lines):
        match = _CONTEXT_RE.match(lines[i])
        if not match:
            break
        captions[match.group(1)] = match.group(2)
        i += 1
    if i >= len(lines) or not lines[i].startswith("Question: "):
        raise TemplateError("missing Question line")
    question = lines[i][len("Question: "):]
    i += 1
    if i >= len(lines):
        raise TemplateError("missing Choices line")
    choices = parse_choices_line(lines[i])
    i += 1
    answers = {}
    while i < len(lines):
        match = _PLAUSIBLE_RE.match(lines[i])
        if not match:
            break
        answers[match.group(1)] = match.group(2)
        i += 1
    if i != len(lines) - 1 or lines[i] != "Answer:":
        raise TemplateError("prompt does not end with a single Answer: line")
    return instruction, VqaContext(
        captions=captions, question=question, choices=tuple(choices), plausible_answers=answers
    )


def parse_har_prompt(text: str) -> tuple[str, HarContext]:
    """Invert :func:`build_har_prompt`; returns (instruction, context).

    The parsed context carries an empty video id: the id lives in the
    prompt record's provenance, not in the prompt text.
    """
    lines = text.split("\n")
    if len(lines) < 6 or not lines[0].startswith("INSTRUCTION: "):
        raise TemplateError("prompt does not start with an INSTRUCTION line")
    instruction = lines[0][len("INSTRUCTION: "):]
    i = 1
    blocks = []
    while i < len(lines) and _FRAME_RE.match(lines[i]):
        number = int(_FRAME_RE.match(lines[i]).group(1))
        if number != len(blocks):
            raise TemplateError(f"frame blocks out of order at line {i}")
        i += 1
        captions = {}
        while i < len(lines):
            match = _CAPTION_RE.match(lines[i])
            if not match:
                break
            captions[match.group(1)] = match.group(2)
            i += 1
        actions = {}
        while i < len(lines):
            match = _ACTION_RE.match(lines[i])
            if not match:
                break
            actions[match.group(1)] = match.group(2)
            i += 1
        blocks.append(
            HarKeyframeBlock(cluster_id=number, captions=captions, action_answers=actions)
        )
    if not blocks:
        raise TemplateError("no Frame blocks found")
    if i >= len(lines) or not lines[i].startswith("Question: "):
        raise TemplateError("missing Question line")
    question = lines[i][len("Question: "):]
    i += 1
    if i >= len(lines):
        raise TemplateError("missing Choices line")
    class_names = parse_choices_line(lines[i])
    i += 1
    if i != len(lines) - 1 or lines[i] != "Answer:":
        raise TemplateError("prompt does not end with a single Answer: line")
    if not question:
        raise TemplateError("empty question")
    ctx = HarContext(video_id="", blocks=tuple(blocks), class_names=tuple(class_names))
    return instruction, ctx


_MARKER_PREFIX_RE = re.compile(r"^\(?([a-z])[\).:]\s*")
_PUNCT_TO_SPACE = str.maketrans({c: " " for c in string.punctuation})


def _canonical(text: str) -> str:
    t = text.strip().casefold()
    t = _MARKER_PREFIX_RE.sub("", t)
    t = t.translate(_PUNCT_TO_SPACE)
    return " ".join(t.split())


def normalize_answer(raw: str, labels: Sequence[str]) -> int | None:
    """Map free-form model output to a label index, or None if unmatched.

    Cascade: verbatim equality, then case/punctuation-folded equality
    (after stripping a leading choice marker like ``(a)``), then unique
    substring containment, then maximal word overlap with ties broken by
    the lower label index.  Returns None only when the overlap with every
    label is zero.
    """
    if not labels:
        raise ValueError("labels must be nonempty")
    if len(set(labels)) != len(labels):
        raise ValueError("labels must be pairwise distinct")
    raw = raw or ""

    stripped = raw.strip()
    for i, label in enumerate(labels):
        if stripped == label.strip():
            return i

    canon = _canonical(raw)
    canon_labels = [_canonical(label) for label in labels]
    for i, cl in enumerate(canon_labels):
        if canon and canon == cl:
            return i

    if canon:
        matches = [i for i, cl in enumerate(canon_labels) if cl and (cl in canon or canon in cl)]
        if len(matches) == 1:
            return matches[0]

    words = set(canon.split())
    overlaps = [len(words & set(cl.split())) for cl in canon_labels]
    best = max(overlaps, default=0)
    if best == 0:
        return None
    return overlaps.index(best)


def export_training_records(records: Sequence[PromptRecord], path: str | Path) -> Path:
    """Write prompt/target pairs as JSONL for external fine-tuning.

    One ``{"prompt", "target", "provenance"}`` object per line, UTF-8
    with ``\\n`` endings.  Every record must carry a target.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, record in enumerate(records):
        if record.target is None:
            raise ValueError(f"record {i} has no target")
        lines.append(
            json.dumps(
                {
                    "prompt": record.prompt_text,
                    "target": record.target,
                    "provenance": record.provenance,
                },
                sort_keys=True,
                ensure_ascii=False,
            )
        )
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def read_training_records(path: str | Path) -> list[PromptRecord]:
    """Parse a training-record JSONL file back into PromptRecords."""
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        obj = json.loads(line)
        records.append(
            PromptRecord(
                prompt_text=obj["prompt"], provenance=obj.get("provenance", {}),
                target=obj["target"],
            )
        )
    return records
