"""Untrained averaging-ensemble baseline.

Each model's free-form answer is embedded and scored against every
choice by cosine similarity; the per-choice scores are averaged across
models and the argmax choice wins:

    score(choice j) = (1/n) * sum_i cos(embed(answer_i), embed(choice_j))

Ties break to the lowest choice index.  Scoring is pure; the only
side-effectful step is querying the models, which
:func:`ensemble_predict` delegates to the gateway.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from cola.frames import Frame
from cola.gateway import ModelEndpoint, ModelGateway

Embedder = Callable[[str], np.ndarray]


@dataclass(frozen=True)
class ChoiceScores:
    """Averaged and per-endpoint cosine scores over the choices."""

    endpoint_names: tuple
    per_endpoint: np.ndarray  # (n_endpoints, n_choices)
    scores: np.ndarray  # column means, length n_choices
    chosen_index: int


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """cos(u, v) in [-1, 1]; raises on zero-norm input."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.dot(u, v) / (nu * nv))


def ensemble_scores(
    answers: Mapping[str, str], choices: Sequence[str], embedder: Embedder
) -> ChoiceScores:
    """Score choices from per-endpoint answer texts.

    ``answers`` maps endpoint name to that model's answer; rows of the
    score matrix follow lexicographic endpoint order.
    """
    if not answers:
        raise ValueError("need at least one endpoint answer")
    if not choices:
        raise ValueError("choices must be nonempty")
    names = tuple(sorted(answers))
    choice_vecs = [np.asarray(embedder(choice), dtype=np.float64) for choice in choices]
    matrix = np.empty((len(names), len(choices)), dtype=np.float64)
    for i, name in enumerate(names):
        answer_vec = np.asarray(embedder(answers[name]), dtype=np.float64)
        for j, cv in enumerate(choice_vecs):
            matrix[i, j] = cosine_similarity(answer_vec, cv)
    scores = matrix.mean(axis=0)
    return ChoiceScores(
        endpoint_names=names,
        per_endpoint=matrix,
        scores=scores,
        chosen_index=int(np.argmax(scores)),
    )


def ensemble_predict(
    image: Frame | bytes,
    question: str,
    choices: Sequence[str],
    endpoints: Sequence[ModelEndpoint],
    embedder: Embedder,
    gateway: ModelGateway,
) -> ChoiceScores:
    """Query every endpoint's VQA answer, then score and pick a choice.

    Endpoint failures propagate with the endpoint's name attached, so a
    failing item is attributable rather than silently skipped.
    """
    answers = {
        endpoint.name: gateway.vqa_answer(endpoint, image, question, choices).text
        for endpoint in endpoints
    }
    return ensemble_scores(answers, choices, embedder)
