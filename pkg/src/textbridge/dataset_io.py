"""Loading, validating, splitting and emitting multi-domain text datasets.

Dataset files hold one JSON object per line::

    {"id": "a-0001", "domain": "A", "label": "dog",
     "tags": [...], "attributes": [...], "captions": [...]}

``id`` and ``domain`` are required; ``label``, ``image_ref`` and the three
description lists are optional. Unknown keys are rejected.
"""

from __future__ import annotations

import json
import types
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .description import Description
from .errors import (DomainError, DuplicateError, FormatError, LabelError,
                     MissingDescriptionError)
from .text import tokenize

REQUIRED_KEYS = ("id", "domain")
OPTIONAL_KEYS = ("label", "image_ref", "tags", "attributes", "captions")
DESCRIPTION_KEYS = ("tags", "attributes", "captions")


def category_key(name: str) -> str:
    return name.strip().lower()


@dataclass(frozen=True)
class CategorySet:
    """Ordered candidate categories; the order decides tie-breaks."""

    names: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(n.strip() for n in self.names)
        if not names:
            raise FormatError("category set is empty")
        index = {}
        for i, name in enumerate(names):
            if not name:
                raise FormatError("empty category name", line=i + 1)
            key = category_key(name)
            if key in index:
                raise DuplicateError(f"duplicate category {name!r}", line=i + 1)
            index[key] = i
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __getitem__(self, i: int) -> str:
        return self.names[i]

    def __contains__(self, name: str) -> bool:
        return category_key(name) in self._index

    def index(self, name: str) -> int:
        return self._index[category_key(name)]

    def lookup(self, text: str) -> str | None:
        """Canonical category name for ``text`` (case/space-insensitive), else None."""
        i = self._index.get(category_key(text))
        return None if i is None else self.names[i]

    def answer_tokens(self, name: str) -> tuple[str, ...]:
        return tuple(tokenize(self.names[self.index(name)]))

    @property
    def token_sequences(self) -> tuple[tuple[str, ...], ...]:
        return tuple(tuple(tokenize(n)) for n in self.names)


def load_category_set(path) -> CategorySet:
    text = Path(path).read_text(encoding="utf-8")
    names: list[str] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        name = raw.strip()
        if not name:
            continue
        key = category_key(name)
        if key in seen:
            raise DuplicateError(
                f"duplicate category {name!r} (first seen on line {seen[key]})", line=lineno)
        seen[key] = lineno
        names.append(name)
    if not names:
        raise FormatError(f"{path}: category file is empty")
    return CategorySet(tuple(names))


def write_category_set(cs: CategorySet, path) -> None:
    Path(path).write_text("\n".join(cs.names) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    domain: str
    label: str | None = None
    image_ref: str | None = None
    description: Description | None = None

    def __post_init__(self):
        if self.image_ref is None and self.description is None:
            raise FormatError(f"record {self.id!r} has neither image_ref nor description")


@dataclass(frozen=True)
class MultiDomainDataset:
    domains: Mapping[str, tuple[SampleRecord, ...]]
    category_set: CategorySet

    def __post_init__(self):
        if not self.domains:
            raise FormatError("dataset has no domains")
        frozen = {}
        seen: set[str] = set()
        for name, records in self.domains.items():
            records = tuple(records)
            if not records:
                raise FormatError(f"domain {name!r} is empty")
            for r in records:
                if r.id in seen:
                    raise DuplicateError(f"sample id {r.id!r} appears twice")
                if r.domain != name:
                    raise FormatError(f"record {r.id!r} filed under {name!r} but has domain {r.domain!r}")
                if r.label is not None and r.label not in self.category_set:
                    raise LabelError(r.id, r.label)
                seen.add(r.id)
            frozen[name] = records
        object.__setattr__(self, "domains", types.MappingProxyType(frozen))

    @classmethod
    def from_records(cls, records: Iterable[SampleRecord], category_set: CategorySet):
        grouped: dict[str, list[SampleRecord]] = {}
        for r in records:
            grouped.setdefault(r.domain, []).append(r)
        return cls({k: tuple(v) for k, v in grouped.items()}, category_set)

    @property
    def domain_names(self) -> list[str]:
        return list(self.domains)

    def counts(self) -> dict[str, int]:
        return {name: len(recs) for name, recs in self.domains.items()}

    def samples(self) -> list[SampleRecord]:
        return [r for recs in self.domains.values() for r in recs]

    def __len__(self) -> int:
        return sum(len(recs) for recs in self.domains.values())

    def stats(self) -> dict:
        return {
            "samples": len(self),
            "classes": len(self.category_set),
            "domains": len(self.domains),
            "per_domain": self.counts(),
        }


def _string_list(value, key: str, lineno: int) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise FormatError(f"{key!r} must be a list of strings", line=lineno)
    return tuple(value)


def parse_record(obj, category_set: CategorySet, lineno: int = 0) -> SampleRecord:
    if not isinstance(obj, dict):
        raise FormatError("record is not a JSON object", line=lineno)
    unknown = set(obj) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise FormatError(f"unknown keys {sorted(unknown)}", line=lineno)
    for key in REQUIRED_KEYS:
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise FormatError(f"missing or non-string {key!r}", line=lineno)
    for key in ("label", "image_ref"):
        if key in obj and obj[key] is not None and not isinstance(obj[key], str):
            raise FormatError(f"{key!r} must be a string", line=lineno)
    label = obj.get("label")
    if label is not None:
        canonical = category_set.lookup(label)
        if canonical is None:
            raise LabelError(obj["id"], label)
        label = canonical
    description = None
    if any(k in obj for k in DESCRIPTION_KEYS):
        try:
            description = Description(
                *(_string_list(obj.get(k, []), k, lineno) for k in DESCRIPTION_KEYS),
                image_id=obj.get("image_ref"))
        except FormatError as exc:
            if exc.line is None:
                raise FormatError(str(exc), line=lineno) from exc
            raise
    if obj.get("image_ref") is None and description is None:
        raise FormatError("record needs image_ref or description lists", line=lineno)
    return SampleRecord(obj["id"], obj["domain"], label, obj.get("image_ref"), description)


def load_dataset(path, category_set: CategorySet) -> MultiDomainDataset:
    """Read a line-delimited dataset; domains keep first-appearance order."""
    grouped: dict[str, list[SampleRecord]] = {}
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"malformed JSON: {exc.msg}", line=lineno) from exc
            record = parse_record(obj, category_set, lineno)
            if record.id in seen:
                raise DuplicateError(
                    f"duplicate id {record.id!r} (first on line {seen[record.id]})", line=lineno)
            seen[record.id] = lineno
            grouped.setdefault(record.domain, []).append(record)
    if not grouped:
        raise FormatError(f"{path}: no records")
    return MultiDomainDataset({k: tuple(v) for k, v in grouped.items()}, category_set)


def record_to_json(r: SampleRecord) -> dict:
    obj: dict = {"id": r.id, "domain": r.domain}
    if r.label is not None:
        obj["label"] = r.label
    if r.image_ref is not None:
        obj["image_ref"] = r.image_ref
    if r.description is not None:
        obj["tags"] = list(r.description.tags)
        obj["attributes"] = list(r.description.attributes)
        obj["captions"] = list(r.description.captions)
    return obj


def write_records(records: Iterable[SampleRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(record_to_json(r), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def emit_text_dataset(ds: MultiDomainDataset, path) -> int:
    """Write the released text-dataset form; every sample must be described."""
    samples = ds.samples()
    for r in samples:
        if r.description is None:
            raise MissingDescriptionError(r.id)
    return write_records(samples, path)


def merge_and_split(ds: MultiDomainDataset, target_domain: str):
    """Leave one domain out: (merged source samples, target samples)."""
    if target_domain not in ds.domains:
        raise DomainError(f"unknown domain {target_domain!r}; have {ds.domain_names}")
    source = [r for name, recs in ds.domains.items() if name != target_domain for r in recs]
    return source, list(ds.domains[target_domain])
