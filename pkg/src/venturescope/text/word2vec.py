"""Skip-gram word vectors trained with negative sampling.

Training follows the usual word2vec recipe (dynamic window, unigram^0.75
noise distribution, linearly decaying learning rate) but updates parameters
on shuffled mini-batches of (center, context) pairs with numpy instead of one
pair at a time.
"""
from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"VSEM1"


class VectorFormatError(ValueError):
    pass


@dataclass
class EmbeddingSpace:
    vocabulary: dict[str, int]
    vectors: np.ndarray  # |V| x h, float32
    frequencies: np.ndarray  # p(w) aligned with vocabulary indices

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    @property
    def tokens(self) -> list[str]:
        out = [""] * len(self.vocabulary)
        for tok, i in self.vocabulary.items():
            out[i] = tok
        return out

    def __contains__(self, token) -> bool:
        return token in self.vocabulary

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[self.vocabulary[token]]

    def frequency(self, token) -> float:
        return float(self.frequencies[self.vocabulary[token]])


def build_vocabulary(corpus: Sequence[Sequence[str]], min_count: int = 5) -> tuple[dict[str, int], np.ndarray]:
    counts = Counter(tok for doc in corpus for tok in doc)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    vocab = {t: i for i, t in enumerate(kept)}
    return vocab, np.array([counts[t] for t in kept], dtype=np.int64)


def _pairs(encoded: list[np.ndarray], window: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) index pairs of one epoch with a shrunk window per center."""
    lengths = np.array([len(d) for d in encoded], dtype=np.int64)
    tokens = np.concatenate(encoded)
    doc_id = np.repeat(np.arange(len(encoded)), lengths)
    n = len(tokens)
    span = window - rng.integers(0, window, size=n)  # effective window in [1, window]
    centers, contexts = [], []
    for k in range(1, window + 1):
        pos = np.arange(n - k)
        ok = (doc_id[pos] == doc_id[pos + k])
        fwd = pos[ok & (span[pos] >= k)]
        centers.append(tokens[fwd])
        contexts.append(tokens[fwd + k])
        bwd = pos[ok & (span[pos + k] >= k)] + k
        centers.append(tokens[bwd])
        contexts.append(tokens[bwd - k])
    return np.concatenate(centers), np.concatenate(contexts)


def train_word2vec(
    corpus: Sequence[Sequence[str]],
    h: int = 300,
    seed: int = 17,
    *,
    window: int = 5,
    negative: int = 5,
    epochs: int = 5,
    min_count: int = 5,
    alpha: float = 0.025,
    min_alpha: float = 1e-4,
    batch_size: int = 256,
) -> EmbeddingSpace:
    """Train skip-gram vectors with negative sampling on tokenized documents.

    Deterministic for a given ``seed``. Raises ``ValueError`` when no token
    reaches ``min_count``.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if h < 1:
        raise ValueError("dimension must be >= 1")
    vocab, counts = build_vocabulary(corpus, min_count)
    if not vocab:
        raise ValueError(f"empty vocabulary: no token occurs at least {min_count} times")

    rng = np.random.default_rng(seed)
    V = len(vocab)
    w_in = ((rng.random((V, h), dtype=np.float32) - 0.5) / h).astype(np.float32)
    w_out = np.zeros((V, h), dtype=np.float32)

    noise = counts.astype(np.float64) ** 0.75
    cum = np.cumsum(noise / noise.sum())
    cum[-1] = 1.0

    encoded = [np.array([vocab[t] for t in doc if t in vocab], dtype=np.int64) for doc in corpus]
    encoded = [d for d in encoded if len(d) > 1]
    if not encoded:
        raise ValueError("no document has two in-vocabulary tokens")

    epoch_pairs = [_pairs(encoded, window, rng) for _ in range(epochs)]
    total = sum(len(c) for c, _ in epoch_pairs)
    done = 0
    for epoch, (centers, contexts) in enumerate(epoch_pairs):
        order = rng.permutation(len(centers))
        centers, contexts = centers[order], contexts[order]
        for lo in range(0, len(centers), batch_size):
            c = centers[lo:lo + batch_size]
            o = contexts[lo:lo + batch_size]
            b = len(c)
            lr = np.float32(max(min_alpha, alpha - (alpha - min_alpha) * done / total))
            done += b
            neg = np.searchsorted(cum, rng.random((b, negative)))
            v = w_in[c]
            u = w_out[o]
            nv = w_out[neg]
            pos_score = 1.0 / (1.0 + np.exp(-np.einsum("bh,bh->b", u, v)))
            neg_score = 1.0 / (1.0 + np.exp(-np.einsum("bkh,bh->bk", nv, v)))
            g_pos = (1.0 - pos_score) * lr
            g_neg = -neg_score * lr * (neg != o[:, None])
            grad_v = g_pos[:, None] * u + np.einsum("bk,bkh->bh", g_neg, nv)
            np.add.at(w_out, o, g_pos[:, None] * v)
            np.add.at(w_out, neg.ravel(), (g_neg[:, :, None] * v[:, None, :]).reshape(-1, h))
            np.add.at(w_in, c, grad_v)
        log.debug("word2vec epoch %d/%d done", epoch + 1, epochs)

    freqs = counts / counts.sum()
    return EmbeddingSpace(vocab, w_in, freqs)


# -- VSEM1 file format ---------------------------------------------------------
# magic "VSEM1" | u32 count | u32 dim | count x (u32 byte length, utf-8 token, dim x f32)

def write_vectors(path, tokens: Sequence[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
        raise ValueError("vectors must be a (len(tokens), dim) matrix")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", len(tokens), vectors.shape[1]))
        for tok, row in zip(tokens, vectors):
            raw = tok.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(row.tobytes())


def read_vectors(path) -> tuple[list[str], np.ndarray]:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise VectorFormatError(f"{path}: bad magic bytes {data[:5]!r}, expected {MAGIC!r}")
    try:
        count, dim = struct.unpack_from("<II", data, 5)
        off = 13
        tokens = []
        out = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            tokens.append(data[off:off + n].decode("utf-8"))
            off += n
            out[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
            off += 4 * dim
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise VectorFormatError(f"{path}: truncated or corrupt vector file ({exc})") from None
    if off != len(data):
        raise VectorFormatError(f"{path}: {len(data) - off} trailing bytes")
    return tokens, out


def save_space(space: EmbeddingSpace, path) -> None:
    write_vectors(path, space.tokens, space.vectors)


def load_space(path, corpus: Sequence[Sequence[str]]) -> EmbeddingSpace:
    """Read a VSEM1 file; unigram frequencies are recounted from ``corpus``."""
    tokens, vectors = read_vectors(path)
    counts = Counter(tok for doc in corpus for tok in doc)
    c = np.array([counts.get(t, 0) for t in tokens], dtype=np.float64)
    if len(c) and c.sum() == 0:
        raise VectorFormatError(f"{path}: no vector token occurs in the corpus")
    return EmbeddingSpace({t: i for i, t in enumerate(tokens)}, vectors, c / max(c.sum(), 1.0))
