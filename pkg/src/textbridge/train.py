"""Source finetuning, pseudo-labeling and the multi-round adaptation loop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .classify import evaluate_accuracy, generative_classify, write_predictions
from .dataset_io import CategorySet, SampleRecord
from .errors import LabelError, MissingDescriptionError, NumericsError
from .prompting import TemplateVariant, prompt_for_sample
from .providers.reference import ReferenceLM
from .reference_lm import (AdamState, Features, RefLMParams, TrainConfig, batch_loss,
                           load_checkpoint, save_checkpoint, train_step)
from .text import END

# the adaptation runner trains both stages for two epochs by default
UDA_CONFIG = TrainConfig(steps=None, epochs=2)


@dataclass(frozen=True)
class Checkpoint:
    params: RefLMParams = field(repr=False)
    state: AdamState = field(repr=False, compare=False)
    id: str = ""
    losses: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.id:
            object.__setattr__(self, "id", self.params.fingerprint())


@dataclass(frozen=True)
class PseudoLabeledSample:
    sample_id: str
    pseudo_label: str
    matched_by: str
    checkpoint_id: str
    raw_answer: str = ""


@dataclass(frozen=True)
class RoundState:
    round: int
    checkpoint_id: str
    pseudo_labels: tuple[PseudoLabeledSample, ...] = ()
    labels_from: str | None = None  # checkpoint that produced pseudo_labels
    target_accuracy: float | None = None
    target_unmatched: float | None = None  # percent of target answers matching no category
    checkpoint: Checkpoint | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {"round": self.round, "checkpoint_id": self.checkpoint_id,
                "labels_from": self.labels_from, "num_pseudo_labels": len(self.pseudo_labels),
                "target_accuracy": self.target_accuracy,
                "target_unmatched": self.target_unmatched}


# ----------------------------------------------------------------------------
# example encoding


class _Encoder:
    """Featurizes each prompt once; answers end with the ``<end>`` token."""

    def __init__(self, params: RefLMParams, cs: CategorySet, variant):
        self.params, self.cs, self.variant = params, cs, TemplateVariant.parse(variant)
        self._cache: dict[str, Features] = {}

    def features(self, sample: SampleRecord) -> Features:
        f = self._cache.get(sample.id)
        if f is None:
            f = self.params.featurize(prompt_for_sample(sample, self.cs, self.variant).text)
            self._cache[sample.id] = f
        return f

    def example(self, sample: SampleRecord, label: str):
        return self.features(sample), self.cs.answer_tokens(label) + (END,)


def _check_labeled(samples: Sequence[SampleRecord], cs: CategorySet):
    for s in samples:
        if s.description is None:
            raise MissingDescriptionError(s.id)
        if s.label is None or s.label not in cs:
            raise LabelError(s.id, s.label)


def _fit(params: RefLMParams, examples: list, cfg: TrainConfig) -> Checkpoint:
    """Seeded minibatch AdamW over ``examples``; the data is reshuffled every pass.

    On a numerical failure the raised NumericsError carries the last good
    checkpoint as ``exc.checkpoint``.
    """
    state = AdamState.zeros_like(params)
    n = len(examples)
    total = cfg.total_steps(n) if n else 0
    rng = np.random.default_rng(cfg.seed)
    losses: list[float] = []
    order = np.empty(0, dtype=np.int64)
    pos = 0
    for _ in range(total):
        if pos >= order.size:
            order, pos = rng.permutation(n), 0
        idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        try:
            params, state, loss = train_step(params, [examples[i] for i in idx], cfg, state)
        except NumericsError as exc:
            exc.checkpoint = Checkpoint(params, state, losses=tuple(losses))
            raise
        losses.append(loss)
    return Checkpoint(params, state, losses=tuple(losses))


def finetune_dg(params: RefLMParams, source: Sequence[SampleRecord], cs: CategorySet,
                cfg: TrainConfig = TrainConfig(), variant="t1") -> Checkpoint:
    """Minimize the mean answer NLL over the labeled (merged) source samples."""
    return finetune_uda(params, source, (), cs, cfg, variant)


def finetune_uda(params: RefLMParams, source: Sequence[SampleRecord],
                 target: Sequence[tuple[SampleRecord, str]], cs: CategorySet,
                 cfg: TrainConfig = UDA_CONFIG, variant="t1") -> Checkpoint:
    """Minimize source NLL plus pseudo-labeled target NLL in shared shuffled batches.

    ``target`` pairs each unlabeled sample with its pseudo-label. With an
    empty target this is exactly :func:`finetune_dg`.
    """
    _check_labeled(source, cs)
    enc = _Encoder(params, cs, variant)
    examples = [enc.example(s, s.label) for s in source]
    for s, label in target:
        if label not in cs:
            raise LabelError(s.id, label)
        if s.description is None:
            raise MissingDescriptionError(s.id)
        examples.append(enc.example(s, label))
    return _fit(params, examples, cfg)


def uda_objective(params: RefLMParams, source: Sequence[SampleRecord],
                  target: Sequence[tuple[SampleRecord, str]], cs: CategorySet,
                  variant="t1") -> float:
    """Summed NLL of source ground truth plus target pseudo-labels."""
    enc = _Encoder(params, cs, variant)
    examples = [enc.example(s, s.label) for s in source]
    examples += [enc.example(s, label) for s, label in target]
    return batch_loss(params, examples) * len(examples) if examples else 0.0


def pseudo_label(checkpoint: Checkpoint, target: Sequence[SampleRecord], cs: CategorySet,
                 variant="t1") -> list[PseudoLabeledSample]:
    """Label every target sample with the frozen checkpoint (rank fallback on)."""
    lm = ReferenceLM(checkpoint.params, cs)
    out = []
    for s in target:
        pred = generative_classify(lm, prompt_for_sample(s, cs, variant), cs, fallback=True)
        out.append(PseudoLabeledSample(s.id, pred.category, pred.matched_by, checkpoint.id,
                                       pred.raw_answer))
    return out


# ----------------------------------------------------------------------------
# orchestration


def _write_round(run_dir: Path, st: RoundState, preds=None) -> None:
    d = run_dir / f"round_{st.round}"
    d.mkdir(parents=True, exist_ok=True)
    save_checkpoint(d / "checkpoint.npz", st.checkpoint.params, st.checkpoint.state)
    if st.pseudo_labels:
        with (d / "pseudo_labels.jsonl").open("w", encoding="utf-8") as fh:
            for p in st.pseudo_labels:
                fh.write(json.dumps({"id": p.sample_id, "category": p.pseudo_label,
                                     "matched_by": p.matched_by, "raw_answer": p.raw_answer,
                                     "score": None, "checkpoint": p.checkpoint_id},
                                    sort_keys=True, ensure_ascii=False) + "\n")
    if preds is not None:
        write_predictions(preds, d / "target_predictions.jsonl")
    (d / "state.json").write_text(json.dumps(st.to_json(), indent=2, sort_keys=True) + "\n")


def run_algorithm1(params: RefLMParams, source: Sequence[SampleRecord],
                   target: Sequence[SampleRecord], cs: CategorySet, rounds: int = 1,
                   dg_cfg: TrainConfig = UDA_CONFIG, uda_cfg: TrainConfig = UDA_CONFIG,
                   variant="t1", run_dir=None) -> list[RoundState]:
    """Round 0 trains on the source alone; round r relabels the target with
    round r-1's checkpoint and continues training from a copy of it.

    Target accuracy is recorded when every target sample carries a label.
    With ``run_dir`` each round is written to ``round_{r}/`` as soon as it
    completes, so a failure keeps the finished rounds.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    run_dir = Path(run_dir) if run_dir is not None else None
    labeled = bool(target) and all(s.label is not None for s in target)

    def finish(st_kwargs, ck):
        acc, preds, unmatched = None, None, None
        if labeled:
            acc, preds = evaluate_accuracy(ReferenceLM(ck.params, cs), target, cs, variant)
            unmatched = 100.0 * sum(p.category is None for p in preds) / len(preds)
        st = RoundState(checkpoint_id=ck.id, target_accuracy=acc, target_unmatched=unmatched,
                        checkpoint=ck, **st_kwargs)
        if run_dir is not None:
            _write_round(run_dir, st, preds)
        return st

    states = [finish({"round": 0}, finetune_dg(params, source, cs, dg_cfg, variant))]
    for r in range(1, rounds + 1):
        prev = states[-1].checkpoint
        labels = pseudo_label(prev, target, cs, variant)
        pairs = [(s, p.pseudo_label) for s, p in zip(target, labels)]
        ck = finetune_uda(prev.params.copy(), source, pairs, cs, uda_cfg, variant)
        states.append(finish({"round": r, "pseudo_labels": tuple(labels),
                              "labels_from": prev.id}, ck))
    return states


def load_round(run_dir, r: int) -> Checkpoint:
    params, state = load_checkpoint(Path(run_dir) / f"round_{r}" / "checkpoint.npz")
    return Checkpoint(params, state)
