"""Smooth-inverse-frequency document vectors."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .word2vec import EmbeddingSpace


@dataclass(frozen=True)
class DocVector:
    company_id: str
    vector: np.ndarray
    token_count: int


def weighted_average(space: EmbeddingSpace, docs: Sequence[Sequence[str]], a: float = 1e-3) -> np.ndarray:
    """Rows of sum_w a/(a + p(w)) v_w / n_in_vocab, one per document.

    Documents without any in-vocabulary token get a zero row and a warning.
    """
    if a <= 0:
        raise ValueError("SIF weight a must be positive")
    vecs = space.vectors.astype(np.float64)
    weights = a / (a + space.frequencies)
    out = np.zeros((len(docs), space.dimension))
    empty = 0
    for i, doc in enumerate(docs):
        idx = [space.vocabulary[t] for t in doc if t in space.vocabulary]
        if not idx:
            empty += 1
            continue
        out[i] = weights[idx] @ vecs[idx] / len(idx)
    if empty:
        warnings.warn(f"{empty} document(s) have no in-vocabulary token; using zero vectors", stacklevel=2)
    return out


def first_component(matrix: np.ndarray) -> np.ndarray:
    """Leading right singular vector of the (uncentred) matrix."""
    _, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(matrix.shape[1])
    return vt[0]


def remove_first_component(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = first_component(matrix)
    return matrix - np.outer(matrix @ u, u), u


def sif_embed(
    space: EmbeddingSpace,
    docs: Mapping[str, Sequence[str]] | Sequence[Sequence[str]],
    a: float = 1e-3,
    token_counts: Mapping[str, int] | None = None,
) -> list[DocVector]:
    """SIF vectors for ``docs`` (a mapping id -> tokens, or a list of token lists).

    Weighted averages are computed first, then every vector loses its
    projection on the first principal direction of the stacked matrix.
    """
    if isinstance(docs, Mapping):
        ids = list(docs)
        token_lists = [docs[k] for k in ids]
    else:
        token_lists = list(docs)
        ids = [str(i) for i in range(len(token_lists))]
    matrix = weighted_average(space, token_lists, a)
    if len(ids):
        matrix, _ = remove_first_component(matrix)
    counts = token_counts or {}
    return [
        DocVector(cid, matrix[i], counts.get(cid, len(token_lists[i])))
        for i, cid in enumerate(ids)
    ]
