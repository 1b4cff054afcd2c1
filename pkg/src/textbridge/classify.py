"""Turning language-model output into category predictions."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .dataset_io import CategorySet
from .errors import CapabilityError, FormatError
from .prompting import PromptInstance, prompt_for_sample
from .providers.base import DEFAULT_BEAM_WIDTH

UNMATCHED = None
MATCHED_BY = ("exact", "normalized", "substring", "rank_fallback", "unmatched")

# quote and bracket characters peeled from both ends of an answer
_WRAPPERS = "`'\"‘’“”[]()<>"
_TRAILING = ".,;:!?"
# "... the most similar category <anything> is" within the first clause
_BOILERPLATE = re.compile(r"^[^.]*?\bthe most similar category\b.*?\bis\b\s*")


@dataclass(frozen=True)
class Prediction:
    category: str | None
    raw_answer: str
    matched_by: str
    score: float | None = None
    sample_id: str | None = None

    def __post_init__(self):
        if self.matched_by not in MATCHED_BY:
            raise ValueError(f"unknown matched_by {self.matched_by!r}")
        if (self.category is None) != (self.matched_by == "unmatched"):
            raise ValueError("category is None exactly when matched_by is 'unmatched'")

    @property
    def matched(self) -> bool:
        return self.category is not None


def _completion(lm, name: str) -> str:
    return name + getattr(lm, "answer_suffix", "")


def category_scores(lm, prompt: PromptInstance | str, cs: CategorySet,
                    length_normalize: bool = False) -> list[float]:
    text = prompt.text if isinstance(prompt, PromptInstance) else prompt
    if not hasattr(lm, "lm_score"):
        raise CapabilityError(f"{getattr(lm, 'identity', lm)!r} cannot score completions")
    out = []
    for name in cs:
        s = lm.lm_score(text, _completion(lm, name))
        out.append(s.total / len(s.logprobs) if length_normalize else s.total)
    return out


def rank_classify(lm, prompt: PromptInstance | str, cs: CategorySet,
                  length_normalize: bool = False) -> Prediction:
    """Pick the category whose answer has the highest summed token log-likelihood.

    Ties go to the earlier category. ``length_normalize`` divides each total
    by its token count; it exists for comparison only and is off by default.
    """
    scores = category_scores(lm, prompt, cs, length_normalize)
    best = max(range(len(cs)), key=lambda i: (scores[i], -i))
    sid = prompt.sample_id if isinstance(prompt, PromptInstance) else None
    return Prediction(cs[best], cs[best], "exact", scores[best], sid)


def _peel(text: str) -> str:
    prev = None
    while prev != text:
        prev = text
        text = text.strip().strip(_WRAPPERS).rstrip(_TRAILING)
    return text


def _name_pattern(name: str) -> re.Pattern:
    parts = [re.escape(p) for p in name.lower().split()]
    return re.compile(r"(?<![^\W_])" + r"\s+".join(parts) + r"(?![^\W_])")


def normalize_answer(raw: str, cs: CategorySet) -> tuple[str | None, str]:
    """Map a free-form answer to a category; returns ``(category or None, matched_by)``."""
    hit = cs.lookup(raw)
    if hit is not None:
        return hit, "exact"
    text = _peel(raw).lower()
    text = _peel(_BOILERPLATE.sub("", text, count=1))
    hit = cs.lookup(text)
    if hit is not None:
        return hit, "normalized"
    found = []
    for i, name in enumerate(cs):
        m = _name_pattern(name).search(text)
        if m:
            found.append((-len(name), m.start(), i))
    if found:
        return cs[min(found)[2]], "substring"
    return UNMATCHED, "unmatched"


def generative_classify(lm, prompt: PromptInstance | str, cs: CategorySet, fallback: bool = False,
                        beam_width: int = DEFAULT_BEAM_WIDTH) -> Prediction:
    text = prompt.text if isinstance(prompt, PromptInstance) else prompt
    sid = prompt.sample_id if isinstance(prompt, PromptInstance) else None
    gen = lm.lm_generate(text, beam_width=beam_width)
    category, how = normalize_answer(gen.text, cs)
    if category is None and fallback:
        ranked = rank_classify(lm, prompt, cs)
        return Prediction(ranked.category, gen.text, "rank_fallback", ranked.score, sid)
    return Prediction(category, gen.text, how, gen.logprob, sid)


# ----------------------------------------------------------------------------
# prediction logs


def write_predictions(predictions: Iterable[Prediction], path, extra: dict | None = None) -> int:
    """One JSON object per line: id, raw_answer, category, matched_by, score (+ extra keys)."""
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in predictions:
            rec = {"id": p.sample_id, "raw_answer": p.raw_answer, "category": p.category,
                   "matched_by": p.matched_by, "score": p.score}
            if extra and p.sample_id in extra:
                rec.update(extra[p.sample_id])
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def read_predictions(path) -> list[dict]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc.msg}", line=lineno) from exc
        for key in ("id", "raw_answer", "category", "matched_by"):
            if key not in rec:
                raise FormatError(f"{path}: prediction missing {key!r}", line=lineno)
        score = rec.get("score")
        if score is not None and not math.isfinite(score):
            raise FormatError(f"{path}: non-finite score", line=lineno)
        out.append(rec)
    return out


def prediction_from_record(rec: dict) -> Prediction:
    fields = {k: rec.get(k) for k in ("category", "raw_answer", "matched_by", "score")}
    return Prediction(sample_id=rec.get("id"), **fields)


def evaluate_accuracy(lm, samples, cs: CategorySet, variant="t1",
                      beam_width: int = DEFAULT_BEAM_WIDTH) -> tuple[float, list[Prediction]]:
    """Percent correct under generative classification without fallback.

    Unmatched answers count as wrong. An empty sample list scores 0.0.
    """
    preds = [generative_classify(lm, prompt_for_sample(s, cs, variant), cs, False, beam_width)
             for s in samples]
    correct = sum(p.category is not None and p.category == s.label for p, s in zip(preds, samples))
    return (100.0 * correct / len(samples) if samples else 0.0), preds
