"""Utility functions."""

from app.utils.embedding import EmbeddingProvider, HashingEmbedder, cosine, embed, get_embedder
from app.utils.text import count_tokens, normalize, snake_case, tokenize, word_tokens

__all__ = [
    "EmbeddingProvider",
    "HashingEmbedder",
    "cosine",
    "embed",
    "get_embedder",
    "count_tokens",
    "normalize",
    "snake_case",
    "tokenize",
    "word_tokens",
]
