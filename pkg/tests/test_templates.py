"""Prompt grammar round-trips, golden files, and answer normalization."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cola.templates import (
    HAR_QUESTION,
    HarContext,
    HarKeyframeBlock,
    PromptRecord,
    TemplateError,
    VqaContext,
    build_har_prompt,
    build_vqa_prompt,
    export_training_records,
    normalize_answer,
    parse_har_prompt,
    parse_vqa_prompt,
    read_training_records,
)

GOLDEN = Path(__file__).parent / "golden"

WORDS = [
    "person", "street", "dog", "red", "walking", "running", "table", "rain",
    "blue", "jump", "crowd", "camera", "night", "vehicle", "door", "tree",
]

names_st = st.lists(
    st.from_regex(r"[a-z][a-z0-9_-]{0,8}", fullmatch=True),
    min_size=1, max_size=4, unique=True,
)
text_st = st.lists(st.sampled_from(WORDS), min_size=1, max_size=6).map(" ".join)
choices_st = st.lists(
    st.lists(st.sampled_from(WORDS), min_size=1, max_size=3).map(" ".join),
    min_size=2, max_size=8, unique=True,
)


def vqa_contexts():
    return st.builds(
        lambda names, caps, question, choices, answers: VqaContext(
            captions=dict(zip(names, caps)),
            question=question,
            choices=tuple(choices),
            plausible_answers=dict(zip(names, answers)),
        ),
        names=names_st,
        caps=st.lists(text_st, min_size=4, max_size=4),
        question=text_st,
        choices=choices_st,
        answers=st.lists(text_st, min_size=4, max_size=4),
    )


def har_contexts():
    block = st.builds(
        lambda names, caps, answers: (dict(zip(names, caps)), dict(zip(names, answers))),
        names=names_st,
        caps=st.lists(text_st, min_size=4, max_size=4),
        answers=st.lists(text_st, min_size=4, max_size=4),
    )
    return st.builds(
        lambda blocks, classes: HarContext(
            video_id="vid",
            blocks=tuple(
                HarKeyframeBlock(cluster_id=i, captions=c, action_answers=a)
                for i, (c, a) in enumerate(blocks)
            ),
            class_names=tuple(classes),
        ),
        blocks=st.lists(block, min_size=1, max_size=10),
        classes=choices_st,
    )


class TestVqaGrammar:
    def test_structure_of_rendered_prompt(self):
        ctx = VqaContext(
            captions={"b": "x y", "a": "w z"},
            question="which one",
            choices=("c1", "c2", "c3", "c4"),
            plausible_answers={"a": "c1", "b": "c2"},
        )
        text = build_vqa_prompt(ctx).prompt_text
        lines = text.split("\n")
        assert sum(1 for l in lines if l.startswith("Context [")) == 2
        assert sum(1 for l in lines if l.startswith("Choices: ")) == 1
        assert "(a) c1 (b) c2 (c) c3 (d) c4" in text
        assert sum(1 for l in lines if l.startswith("Plausible answer [")) == 2
        assert lines[-1] == "Answer:"

    def test_rendering_is_deterministic(self):
        ctx = VqaContext(
            captions={"m": "a cat"}, question="what animal",
            choices=("cat", "dog"), plausible_answers={"m": "cat"},
        )
        assert build_vqa_prompt(ctx).prompt_text == build_vqa_prompt(ctx).prompt_text

    def test_golden_file(self):
        ctx = VqaContext(
            captions={"vlm-b": "a dog on grass", "vlm-a": "a running dog"},
            question="What is the animal doing?",
            choices=("sleeping", "running", "eating", "barking"),
            plausible_answers={"vlm-a": "running", "vlm-b": "running fast"},
        )
        expected = (GOLDEN / "vqa_prompt.txt").read_text(encoding="utf-8")
        assert build_vqa_prompt(ctx).prompt_text == expected

    @settings(max_examples=120, deadline=None)
    @given(ctx=vqa_contexts())
    def test_roundtrip(self, ctx):
        record = build_vqa_prompt(ctx)
        instruction, back = parse_vqa_prompt(record.prompt_text)
        assert back == ctx
        assert instruction

    def test_invalid_contexts_rejected(self):
        with pytest.raises(TemplateError):
            VqaContext(captions={}, question="q", choices=("a b",), plausible_answers={"m": "x"})
        with pytest.raises(TemplateError):
            VqaContext(captions={"m": "c"}, question="q",
                       choices=("dup", "dup"), plausible_answers={"m": "x"})
        with pytest.raises(TemplateError):
            VqaContext(captions={"m": "multi\nline"}, question="q",
                       choices=("a",), plausible_answers={"m": "x"})
        with pytest.raises(TemplateError):
            VqaContext(captions={"bad]name": "c"}, question="q",
                       choices=("a",), plausible_answers={"m": "x"})
        with pytest.raises(TemplateError, match="marker"):
            VqaContext(captions={"m": "c"}, question="q",
                       choices=("fine", "sneaky (b) text"), plausible_answers={"m": "x"})


class TestHarGrammar:
    def test_block_counts(self):
        ctx = HarContext(
            video_id="v", class_names=("walk", "run"),
            blocks=(HarKeyframeBlock(0, {"a": "c1", "b": "c2"}, {"a": "walk", "b": "run"}),),
        )
        text = build_har_prompt(ctx).prompt_text
        lines = text.split("\n")
        assert lines.count("Frame 0:") == 1
        block_lines = [l for l in lines if l.startswith(("Caption [", "Action ["))]
        assert len(block_lines) == 4
        assert f"Question: {HAR_QUESTION}" in lines

    def test_ten_blocks_numbered_in_input_order(self):
        blocks = tuple(
            HarKeyframeBlock(i, {"m": f"cap {i}"}, {"m": "walk"}) for i in range(10)
        )
        ctx = HarContext(video_id="v", blocks=blocks, class_names=("walk", "run"))
        text = build_har_prompt(ctx).prompt_text
        assert [f"Frame {k}:" in text for k in range(10)] == [True] * 10

    def test_golden_file(self):
        ctx = HarContext(
            video_id="v1",
            blocks=(
                HarKeyframeBlock(0, {"vlm-a": "street scene", "vlm-b": "people outside"},
                                 {"vlm-a": "walking", "vlm-b": "strolling"}),
                HarKeyframeBlock(1, {"vlm-a": "crosswalk"}, {"vlm-a": "walking"}),
            ),
            class_names=("walking", "running", "sitting"),
        )
        expected = (GOLDEN / "har_prompt.txt").read_text(encoding="utf-8")
        assert build_har_prompt(ctx).prompt_text == expected

    @settings(max_examples=120, deadline=None)
    @given(ctx=har_contexts())
    def test_roundtrip(self, ctx):
        record = build_har_prompt(ctx)
        _, back = parse_har_prompt(record.prompt_text)
        assert back.class_names == ctx.class_names
        assert len(back.blocks) == len(ctx.blocks)
        for parsed, original in zip(back.blocks, ctx.blocks):
            assert parsed.captions == original.captions
            assert parsed.action_answers == original.action_answers


class TestNormalizeAnswer:
    def test_marker_strip(self):
        assert normalize_answer("(b) running", ["walking", "running"]) == 1

    def test_case_and_punctuation_fold(self):
        assert normalize_answer("Running.", ["walking", "running"]) == 1

    def test_zero_overlap_is_unmatched(self):
        assert normalize_answer("the person is sprinting", ["walking", "running", "sitting"]) is None

    def test_substring_match(self):
        assert normalize_answer("i think they are walking slowly", ["walking", "running"]) == 0

    def test_word_overlap_with_tie_to_lower_index(self):
        labels = ["red car", "blue car"]
        assert normalize_answer("a car", labels) == 0

    def test_unmatched_requires_zero_overlap_everywhere(self):
        assert normalize_answer("blue", ["red car", "blue car"]) == 1

    @settings(max_examples=100, deadline=None)
    @given(labels=choices_st, idx=st.integers(min_value=0, max_value=7))
    def test_self_normalization(self, labels, idx):
        idx = idx % len(labels)
        assert normalize_answer(labels[idx], labels) == idx

    def test_errors(self):
        with pytest.raises(ValueError):
            normalize_answer("x", [])
        with pytest.raises(ValueError):
            normalize_answer("x", ["a", "a"])


class TestTrainingExport:
    def test_empty_export(self, tmp_path):
        path = export_training_records([], tmp_path / "train.jsonl")
        assert path.read_text(encoding="utf-8") == ""

    def test_three_records_roundtrip(self, tmp_path):
        records = [
            PromptRecord(prompt_text=f"p{i}", provenance={"video_id": f"v{i}"}, target=f"t{i}")
            for i in range(3)
        ]
        path = export_training_records(records, tmp_path / "train.jsonl")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        for line in lines:
            obj = json.loads(line)
            assert {"prompt", "target", "provenance"} <= set(obj)
        assert read_training_records(path) == records

    def test_missing_target_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no target"):
            export_training_records([PromptRecord(prompt_text="p")], tmp_path / "x.jsonl")
