"""Shared tokenization for keyword extraction and lexical retrieval."""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Fixed 50-word stop list; keeps keyword extraction and retrieval scores
# stable across environments.
STOP_WORDS = frozenset(
    {
        "a", "an", "and", "are", "as", "at", "be", "but", "by", "for",
        "from", "had", "has", "have", "he", "her", "his", "if", "in",
        "into", "is", "it", "its", "no", "not", "of", "on", "or", "our",
        "she", "so", "that", "the", "their", "them", "then", "there",
        "these", "they", "this", "to", "was", "we", "were", "when",
        "which", "who", "will", "with", "you",
    }
)


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens, stop words removed, order preserved."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if t not in STOP_WORDS]


def token_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text))
