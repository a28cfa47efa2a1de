"""Text normalization and tokenization helpers."""

from __future__ import annotations

import re
import unicodedata

_WHITESPACE_RE = re.compile(r"\s+")
_TOKEN_RE = re.compile(
    r"\d+(?:[.,:]\d+)*(?:-[A-Za-z]+)*%?"
    r"|[A-Za-z]+(?:['’\-][A-Za-z]+)*"
    r"|[^\sA-Za-z0-9]"
)
_TERMINAL_PUNCT = ".,!?;:"


def normalize(text: str) -> str:
    """Unicode NFC, lowercase, collapse whitespace. Idempotent."""
    folded = unicodedata.normalize("NFC", text).lower()
    return _WHITESPACE_RE.sub(" ", folded).strip()


def tokenize(text: str) -> list[str]:
    """Split raw text into word, number and punctuation tokens (case preserved)."""
    return _TOKEN_RE.findall(unicodedata.normalize("NFC", text))


def word_tokens(text: str) -> list[str]:
    """Tokens that carry letters or digits."""
    return [token for token in tokenize(text) if token[0].isalnum()]


def count_tokens(text: str) -> int:
    """Whitespace token count, the engine's model-agnostic token metric."""
    return len(text.split())


def strip_punctuation(text: str) -> str:
    """Drop trailing and leading clause punctuation."""
    return text.strip().strip(_TERMINAL_PUNCT + " ").strip()


def snake_case(text: str) -> str:
    """``"Warranty Period"`` -> ``"warranty_period"``."""
    words = re.findall(r"[a-z0-9]+", normalize(text))
    return "_".join(words)


def strip_possessive(token: str) -> str:
    lowered = token.lower()
    if lowered.endswith("'s") or lowered.endswith("’s"):
        return token[:-2]
    return token
