"""File-backed providers.

Each fixture file holds one JSON object per line. Records are keyed either
by an explicit ``id``/``text``/``tag``/``prompt`` value or by ``sha256`` of
the input string, so large inputs need not be repeated verbatim.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import CapabilityError, FormatError, ProviderError
from .base import DEFAULT_BEAM_WIDTH, Generation, LMScore, attribute_prompt, split_attribute_response


def input_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _read_records(path):
    raw = Path(path).read_bytes()
    records = []
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: malformed JSON: {exc.msg}", line=lineno) from exc
        if not isinstance(obj, dict):
            raise FormatError(f"{path}: record is not an object", line=lineno)
        records.append(obj)
    return records, hashlib.sha256(raw).hexdigest()[:12]


class _Keyed:
    kind = "fixture"
    key_fields: tuple[str, ...] = ("id",)

    def __init__(self, path):
        self.path = Path(path)
        records, digest = _read_records(self.path)
        self.identity = f"{self.kind}:{digest}"
        self._by_key: dict[str, dict] = {}
        for rec in records:
            keys = [rec[f] for f in self.key_fields if isinstance(rec.get(f), str)]
            if isinstance(rec.get("sha256"), str):
                keys.append("sha256:" + rec["sha256"])
            if not keys:
                raise FormatError(f"{self.path}: record without a key field: {rec!r}"[:200])
            for k in keys:
                self._by_key[k] = rec

    def _find(self, item: str) -> dict:
        rec = self._by_key.get(item) or self._by_key.get("sha256:" + input_digest(item))
        if rec is None:
            rec = self._by_key.get("*")
        if rec is None:
            raise ProviderError(f"missing fixture for {item[:80]!r} in {self.path.name}")
        return rec


class FixtureEmbedder(_Keyed):
    kind = "fixture-embed"
    key_fields = ("id", "text")

    def embed(self, item: str) -> np.ndarray:
        rec = self._find(item)
        return np.asarray(rec["vector"], dtype=np.float64)


class FixtureCaptioner(_Keyed):
    kind = "fixture-caption"

    def generate_captions(self, image_ref: str, n: int) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        captions = self._find(image_ref).get("captions", [])
        if len(captions) < n:
            raise ProviderError(f"fixture for {image_ref!r} has {len(captions)} captions, {n} requested")
        return list(captions[:n])


class FixtureAttributes(_Keyed):
    kind = "fixture-attr"
    key_fields = ("tag",)

    def prompt_for(self, tag: str) -> str:
        return attribute_prompt(tag)

    def generate_attributes(self, tag: str) -> list[str]:
        if not tag:
            raise ValueError("tag must be non-empty")
        rec = self._find(tag)
        if "attributes" in rec:
            attrs = [a.strip() for a in rec["attributes"] if a.strip()]
        else:
            attrs = split_attribute_response(rec.get("response", ""))
        if not attrs:
            raise ProviderError(f"empty attribute response for tag {tag!r}")
        return attrs


class FixtureLM(_Keyed):
    """Canned answers and (optionally) canned completion log-probabilities.

    Record form: ``{"prompt": ..., "answer": ..., "scores": {completion: [lp, ...]}}``;
    ``"prompt": "*"`` matches any prompt.
    """

    kind = "fixture-lm"
    key_fields = ("prompt",)

    def lm_generate(self, prompt: str, beam_width: int = DEFAULT_BEAM_WIDTH,
                    max_tokens: int | None = None) -> Generation:
        if beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        rec = self._find(prompt)
        return Generation(rec["answer"], bool(rec.get("truncated", False)))

    def lm_score(self, prompt: str, completion: str) -> LMScore:
        if not completion:
            raise ValueError("completion must be non-empty")
        rec = self._find(prompt)
        if "scores" not in rec:
            raise CapabilityError(f"fixture {self.path.name} has no log-probabilities")
        entry = rec["scores"].get(completion)
        if entry is None:
            raise ProviderError(f"missing fixture score for completion {completion!r}")
        if isinstance(entry, dict):
            return LMScore(tuple(entry["tokens"]), tuple(entry["logprobs"]))
        return LMScore(tuple(completion.split()) if len(entry) == len(completion.split())
                       else tuple(f"t{i}" for i in range(len(entry))), tuple(entry))
