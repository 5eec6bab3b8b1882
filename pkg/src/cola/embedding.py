"""Deterministic hashed character-trigram text embeddings.

This is the embedding the bundled mock server exposes on its ``embed``
endpoint, and the reference embedder for offline tests of the cosine
ensemble path.  Real runs may point the ``embed`` capability at any
embedding service instead.
"""

from __future__ import annotations

import zlib

import numpy as np

DEFAULT_DIM = 256


def trigram_embedding(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """L2-normalized hashed character-trigram counts of ``text``.

    Case-insensitive; texts shorter than 3 characters contribute a
    single token.  Raises ValueError on empty text (a zero vector has
    no direction).
    """
    if not text:
        raise ValueError("cannot embed empty text")
    folded = text.casefold()
    tokens = (
        [folded[i : i + 3] for i in range(len(folded) - 2)] if len(folded) >= 3 else [folded]
    )
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        vec[zlib.crc32(tok.encode("utf-8")) % dim] += 1.0
    return vec / np.linalg.norm(vec)
