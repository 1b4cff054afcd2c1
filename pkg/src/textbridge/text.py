"""Tokenization shared by the reference LM, answer matching and word counts."""

from __future__ import annotations

import re

BEGIN = "<begin>"
END = "<end>"

_SPECIAL = re.compile(r"(<begin>|<end>)")
# letters and digits only: underscores and all punctuation act as separators
_WORD = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and punctuation, drop the punctuation.

    The special markers ``<begin>`` and ``<end>`` survive as single tokens.
    """
    tokens: list[str] = []
    for piece in _SPECIAL.split(text):
        if piece in (BEGIN, END):
            tokens.append(piece)
        elif piece:
            tokens.extend(_WORD.findall(piece.lower()))
    return tokens


def words(text: str) -> list[str]:
    """Whitespace-delimited words that contain at least one token."""
    return [w for w in text.split() if _WORD.search(w)]
