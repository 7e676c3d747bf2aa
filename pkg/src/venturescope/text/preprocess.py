"""Description cleaning, stopword removal and phrase (bigram) merging."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

MIN_TOKENS = 10

_LETTERS = re.compile(r"[^\W\d_]+")


@lru_cache(maxsize=None)
def stopwords() -> frozenset[str]:
    text = resources.files(__package__).joinpath("stopwords_en.txt").read_text(encoding="utf-8")
    return frozenset(w for w in text.split("\n") if w and not w.startswith("#"))


def tokenize(text: str) -> list[str]:
    """Lowercase letter runs with stopwords removed.

    Digits, punctuation and underscores all act as separators.
    """
    stop = stopwords()
    return [w for w in _LETTERS.findall(text.lower()) if w not in stop]


@dataclass(frozen=True)
class BigramTable:
    """Adjacent word pairs to be merged into ``a_b`` tokens."""

    scores: dict[tuple[str, str], float] = field(default_factory=dict)
    delta: float = 5.0
    threshold: float = 10.0

    def __contains__(self, pair) -> bool:
        return pair in self.scores

    def __len__(self) -> int:
        return len(self.scores)

    def apply(self, tokens: Sequence[str]) -> list[str]:
        """Greedy left-to-right merge of known pairs."""
        out = []
        i = 0
        n = len(tokens)
        while i < n:
            if i + 1 < n and (tokens[i], tokens[i + 1]) in self.scores:
                out.append(f"{tokens[i]}_{tokens[i + 1]}")
                i += 2
            else:
                out.append(tokens[i])
                i += 1
        return out


def bigram_score(pair_count: int, count_a: int, count_b: int, n_tokens: int, delta: float = 5.0) -> float:
    return (pair_count - delta) * n_tokens / (count_a * count_b)


def learn_bigrams(corpus: Iterable[Sequence[str]], delta: float = 5.0, threshold: float = 10.0) -> BigramTable:
    """Score every adjacent pair and keep those with score >= threshold.

    score(a, b) = (count(a, b) - delta) * N / (count(a) * count(b)), where N is
    the total token count of the corpus.
    """
    unigrams: Counter[str] = Counter()
    pairs: Counter[tuple[str, str]] = Counter()
    for doc in corpus:
        unigrams.update(doc)
        pairs.update(zip(doc, doc[1:]))
    if not unigrams:
        raise ValueError("cannot learn bigrams from an empty corpus")
    n = sum(unigrams.values())
    scores = {}
    for (a, b), c in pairs.items():
        s = bigram_score(c, unigrams[a], unigrams[b], n, delta)
        if s >= threshold:
            scores[(a, b)] = s
    return BigramTable(scores, delta, threshold)


def word_count(text: str) -> int:
    return len(tokenize(text))


def preprocess(description: str, bigrams: BigramTable | None = None, min_tokens: int = MIN_TOKENS) -> list[str] | None:
    """Tokens for one description, or ``None`` when it is too short to use.

    The length check counts words before phrase merging.
    """
    tokens = tokenize(description)
    if len(tokens) < min_tokens:
        return None
    if bigrams is not None:
        tokens = bigrams.apply(tokens)
    return tokens
