"""Description embedding and competitor detection."""
from .competition import (
    CompetitionConfig,
    CompetitorSet,
    DocUniverse,
    FundingTotals,
    competition_features,
    cosine_similarity,
    find_competitors,
)
from .preprocess import BigramTable, learn_bigrams, preprocess, tokenize
from .sif import DocVector, sif_embed
from .word2vec import EmbeddingSpace, VectorFormatError, read_vectors, train_word2vec, write_vectors

__all__ = [
    "BigramTable", "CompetitionConfig", "CompetitorSet", "DocUniverse", "DocVector", "EmbeddingSpace",
    "FundingTotals", "VectorFormatError", "competition_features", "cosine_similarity", "find_competitors",
    "learn_bigrams", "preprocess", "read_vectors", "sif_embed", "tokenize", "train_word2vec", "write_vectors",
]
