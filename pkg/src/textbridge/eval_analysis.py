"""Evaluation protocols, accuracy tables and description analyses."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .classify import evaluate_accuracy, write_predictions
from .dataset_io import MultiDomainDataset, SampleRecord, merge_and_split
from .errors import CapabilityError, SizeError, TextBridgeError
from .prompting import prompt_for_sample
from .providers.reference import ReferenceLM
from .reference_lm import RefLMParams, TrainConfig, init_params, token_sensitivity
from .text import END, tokenize
from .train import UDA_CONFIG, finetune_dg, run_algorithm1

__all__ = ["evaluate_accuracy", "AccuracyTable", "dg_protocol", "uda_protocol",
           "word_frequency", "FrequencyTable", "sensitivity_report", "export_embeddings",
           "stopwords"]

TABLE_FORMAT = "acc-table-1"


@dataclass
class AccuracyTable:
    """Accuracy per task in percent.

    DG tables have one row per held-out domain. UDA tables are matrices with
    sources as rows and targets as columns; ``cells`` is keyed by
    ``(source, target)``. Failed tasks are listed in ``errors`` and leave the
    table ``partial``.
    """

    kind: str  # "dg" or "uda"
    domains: tuple[str, ...]
    cells: dict = field(default_factory=dict)
    unmatched: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("dg", "uda"):
            raise ValueError(f"unknown table kind {self.kind!r}")

    def add(self, task, accuracy: float, unmatched_rate: float = 0.0) -> None:
        if not 0.0 <= accuracy <= 100.0:
            raise ValueError(f"accuracy {accuracy} outside [0, 100]")
        self.cells[task] = accuracy
        self.unmatched[task] = unmatched_rate

    @property
    def partial(self) -> bool:
        return bool(self.errors)

    @property
    def average(self) -> float:
        vals = list(self.cells.values())
        return math.fsum(vals) / len(vals) if vals else float("nan")

    def row_average(self, source: str) -> float:
        vals = [v for (s, _), v in self.cells.items() if s == source]
        return math.fsum(vals) / len(vals) if vals else float("nan")

    def column_average(self, target: str) -> float:
        vals = [v for (_, t), v in self.cells.items() if t == target]
        return math.fsum(vals) / len(vals) if vals else float("nan")

    def _grid(self) -> list[list[str]]:
        def fmt(x):
            return "-" if x is None or math.isnan(x) else f"{x:.1f}"

        if self.kind == "dg":
            header = list(self.domains) + ["Avg"]
            return [header, [fmt(self.cells.get(d)) for d in self.domains] + [fmt(self.average)]]
        grid = [["src\\tgt"] + list(self.domains) + ["Avg"]]
        for s in self.domains:
            row = [s] + [("" if s == t else fmt(self.cells.get((s, t)))) for t in self.domains]
            grid.append(row + [fmt(self.row_average(s))])
        grid.append(["Avg"] + [fmt(self.column_average(t)) for t in self.domains]
                    + [fmt(self.average)])
        return grid

    def to_text(self) -> str:
        grid = self._grid()
        widths = [max(len(r[i]) for r in grid) for i in range(len(grid[0]))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip() for row in grid]
        if self.partial:
            lines.append("partial: failed tasks " + ", ".join(map(_task_name, self.errors)))
        return "\n".join(lines) + "\n"

    def to_tsv(self) -> str:
        return "".join("\t".join(row) + "\n" for row in self._grid())

    def to_json(self) -> dict:
        return {"format": TABLE_FORMAT, "kind": self.kind, "domains": list(self.domains),
                "cells": {_task_name(k): v for k, v in self.cells.items()},
                "unmatched": {_task_name(k): v for k, v in self.unmatched.items()},
                "average": self.average, "partial": self.partial,
                "errors": {_task_name(k): v for k, v in self.errors.items()}}


def _task_name(task) -> str:
    return f"{task[0]}->{task[1]}" if isinstance(task, tuple) else str(task)


def _unmatched_rate(preds) -> float:
    return 100.0 * sum(p.category is None for p in preds) / len(preds) if preds else 0.0


def _default_init(ds: MultiDomainDataset) -> RefLMParams:
    return init_params(ds.category_set.names)


def dg_protocol(ds: MultiDomainDataset, cfg: TrainConfig = TrainConfig(),
                init: Callable[[MultiDomainDataset], RefLMParams] = _default_init,
                variant="t1", targets: Sequence[str] | None = None, run_dir=None) -> AccuracyTable:
    """Leave-one-domain-out: train on the other domains, test on the held-out one."""
    if len(ds.domain_names) < 2:
        raise SizeError("the DG protocol needs at least two domains")
    cs = ds.category_set
    table = AccuracyTable("dg", tuple(ds.domain_names))
    for d in targets or ds.domain_names:
        try:
            source, target = merge_and_split(ds, d)
            ck = finetune_dg(init(ds), source, cs, cfg, variant)
            acc, preds = evaluate_accuracy(ReferenceLM(ck.params, cs), target, cs, variant)
        except TextBridgeError as exc:
            table.errors[d] = f"{type(exc).__name__}: {exc}"
            continue
        table.add(d, acc, _unmatched_rate(preds))
        if run_dir is not None:
            out = Path(run_dir) / f"dg_{d}"
            out.mkdir(parents=True, exist_ok=True)
            write_predictions(preds, out / "predictions.jsonl")
    return table


def uda_protocol(ds: MultiDomainDataset, rounds: int = 1, dg_cfg: TrainConfig = UDA_CONFIG,
                 uda_cfg: TrainConfig = UDA_CONFIG,
                 init: Callable[[MultiDomainDataset], RefLMParams] = _default_init,
                 variant="t1", pairs: Sequence[tuple[str, str]] | None = None,
                 run_dir=None) -> AccuracyTable:
    """Every ordered (source, target) pair; reports the final round's target accuracy."""
    names = ds.domain_names
    if len(names) < 2:
        raise SizeError("the UDA protocol needs at least two domains")
    cs = ds.category_set
    table = AccuracyTable("uda", tuple(names))
    pairs = pairs or [(s, t) for s in names for t in names if s != t]
    for s, t in pairs:
        try:
            source, target = list(ds.domains[s]), list(ds.domains[t])
            sub = None if run_dir is None else Path(run_dir) / f"uda_{s}_{t}"
            states = run_algorithm1(init(ds), source, target, cs, rounds, dg_cfg, uda_cfg,
                                    variant, sub)
            final = states[-1]
        except (TextBridgeError, KeyError) as exc:
            table.errors[(s, t)] = f"{type(exc).__name__}: {exc}"
            continue
        if final.target_accuracy is None:
            table.errors[(s, t)] = "target domain is not fully labeled"
            continue
        table.add((s, t), final.target_accuracy, final.target_unmatched)
    return table


# ----------------------------------------------------------------------------
# word frequency


@dataclass(frozen=True)
class FrequencyTable:
    words: tuple[str, ...]
    domains: tuple[str, ...]
    values: dict  # (word, domain) -> occurrences per sample

    def get(self, word: str, domain: str) -> float:
        return self.values[(word, domain)]

    def to_tsv(self) -> str:
        lines = ["word\t" + "\t".join(self.domains)]
        for w in self.words:
            lines.append(w + "\t" + "\t".join(f"{self.values[(w, d)]:.2f}" for d in self.domains))
        return "\n".join(lines) + "\n"


def _item_tokens(desc) -> list[str]:
    """Tokens of the tags, attributes and captions, without the block headers."""
    return [t for item in desc.tags + desc.attributes + desc.captions for t in tokenize(item)]


def word_frequency(samples: Sequence[SampleRecord], words: Sequence[str]) -> FrequencyTable:
    """Occurrences of each word per described sample, by domain.

    Multi-token entries (for example ``"oil painting"``) count occurrences of
    the token sequence. Domains appear in first-appearance order.
    """
    counts: dict[str, Counter] = {}
    n: Counter = Counter()
    queries = [tuple(tokenize(w)) for w in words]
    for s in samples:
        if s.description is None:
            raise CapabilityError(f"sample {s.id!r} has no description")
        toks = _item_tokens(s.description)
        n[s.domain] += 1
        c = counts.setdefault(s.domain, Counter())
        for w, q in zip(words, queries):
            if q:
                c[w] += sum(tuple(toks[i:i + len(q)]) == q for i in range(len(toks) - len(q) + 1))
    domains = tuple(counts)
    values = {(w, d): counts[d][w] / n[d] for w in words for d in domains}
    return FrequencyTable(tuple(words), domains, values)


# ----------------------------------------------------------------------------
# sensitivity


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = resources.files("textbridge.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def sensitivity_report(lm, sample: SampleRecord, cs, top_n: int = 10, variant="t1",
                       stop: frozenset[str] | None = None) -> list[tuple[str, float]]:
    """Description words ranked by the absolute loss gradient of their feature.

    Only the reference model exposes gradients. Template words are left out
    because every prompt shares them; stop-words are dropped. Ties keep the
    order of first occurrence in the description.
    """
    params = lm.params if isinstance(lm, ReferenceLM) else lm
    if not isinstance(params, RefLMParams):
        raise CapabilityError(f"{getattr(lm, 'identity', type(lm).__name__)} exposes no gradients")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    stop = stopwords() if stop is None else stop
    prompt = prompt_for_sample(sample, cs, variant).text
    sens = token_sensitivity(params, prompt, cs.answer_tokens(sample.label) + (END,))
    content = [t for t in dict.fromkeys(_item_tokens(sample.description)) if t not in stop]
    ranked = sorted(enumerate(content), key=lambda p: (-sens[p[1]], p[0]))
    return [(t, sens[t]) for _, t in ranked[:top_n]]


# ----------------------------------------------------------------------------
# embedding export


def export_embeddings(samples: Sequence[SampleRecord], provider, path) -> int:
    """Write ``id, domain, label, v0..`` rows (tab-separated) for external projection.

    Each sample is embedded through its rendered description.
    """
    if not hasattr(provider, "embed"):
        raise CapabilityError(f"{getattr(provider, 'identity', provider)!r} cannot embed")
    rows, dim = [], None
    for s in samples:
        if s.description is None:
            raise CapabilityError(f"sample {s.id!r} has no description")
        v = provider.embed(s.description.render())
        if dim is None:
            dim = len(v)
        elif len(v) != dim:
            raise SizeError(f"sample {s.id!r}: embedding dim {len(v)} != {dim}")
        rows.append([s.id, s.domain, s.label or ""] + [repr(float(x)) for x in v])
    header = ["id", "domain", "label"] + [f"v{i}" for i in range(dim or 0)]
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for row in [header] + rows:
            fh.write("\t".join(row) + "\n")
    return len(rows)
