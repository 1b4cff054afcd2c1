"""Provider contracts and the result types they exchange."""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

ATTRIBUTE_PROMPT = "What are useful features for distinguishing a {tag} in a photo?"

DEFAULT_BEAM_WIDTH = 4


@dataclass(frozen=True)
class LMScore:
    tokens: tuple[str, ...]
    logprobs: tuple[float, ...]
    total: float = field(default=math.nan)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "logprobs", tuple(float(x) for x in self.logprobs))
        if len(self.tokens) != len(self.logprobs):
            raise ValueError("tokens and logprobs differ in length")
        if any(lp > 0 for lp in self.logprobs):
            raise ValueError("log-probabilities must be <= 0")
        total = math.fsum(self.logprobs)
        if math.isnan(self.total):
            object.__setattr__(self, "total", total)
        elif abs(self.total - total) > 1e-9:
            raise ValueError(f"total {self.total} != sum of logprobs {total}")


@dataclass(frozen=True)
class Generation:
    text: str
    truncated: bool = False
    logprob: float | None = None


@runtime_checkable
class EmbeddingProvider(Protocol):
    identity: str

    def embed(self, item: str) -> np.ndarray: ...


@runtime_checkable
class CaptionProvider(Protocol):
    identity: str

    def generate_captions(self, image_ref: str, n: int) -> list[str]: ...


@runtime_checkable
class AttributeProvider(Protocol):
    identity: str

    def generate_attributes(self, tag: str) -> list[str]: ...


@runtime_checkable
class LanguageModel(Protocol):
    identity: str

    def lm_score(self, prompt: str, completion: str) -> LMScore: ...

    def lm_generate(self, prompt: str, beam_width: int = DEFAULT_BEAM_WIDTH,
                    max_tokens: int | None = None) -> Generation: ...


def attribute_prompt(tag: str) -> str:
    return ATTRIBUTE_PROMPT.format(tag=tag)


_MARKER = re.compile(r"^\s*(?:[-*•]+|\(?\d+[.)]|\(?[a-zA-Z][.)])\s+")


def split_attribute_response(response: str) -> list[str]:
    """One attribute per non-empty line, with bullet/number markers removed."""
    out = []
    for line in response.splitlines():
        line = _MARKER.sub("", line).strip()
        if line:
            out.append(line)
    return out


def compose_attribute(tag: str, feature: str) -> str:
    """Attach a generated feature to its tag, e.g. ``house which has windows``."""
    if feature.lower().startswith(tag.lower()):
        return feature
    return f"{tag} which {feature}"


def batch_map(fn, items: Sequence, max_workers: int = 1) -> list:
    """Apply ``fn`` to every item, preserving order; threads when max_workers > 1."""
    if max_workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))
