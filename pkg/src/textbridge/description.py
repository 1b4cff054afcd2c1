"""Textual image descriptions: assembling top tags, attributes and captions."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

from .errors import FormatError, ProviderError, TextBridgeError
from .providers.base import compose_attribute
from .vocab_index import top_k


@dataclass(frozen=True)
class DescriptionConfig:
    """How many tags (K), attributes (M) and captions (N) go into a description."""

    num_tags: int = 5
    num_attributes: int = 5
    num_captions: int = 5

    def __post_init__(self):
        for name in ("num_tags", "num_attributes", "num_captions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


def _check_items(kind: str, items: tuple[str, ...]) -> None:
    for item in items:
        if not isinstance(item, str) or not item.strip():
            raise FormatError(f"{kind} entries must be non-empty strings, got {item!r}")
        if "\n" in item or "\r" in item:
            raise FormatError(f"{kind} entry contains a line break: {item!r}")


@dataclass(frozen=True)
class Description:
    tags: tuple[str, ...]
    attributes: tuple[str, ...]
    captions: tuple[str, ...]
    # provenance and retrieval scores are kept for analysis only
    image_id: str | None = field(default=None, compare=False)
    tag_scores: tuple[float, ...] | None = field(default=None, compare=False)
    attribute_scores: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "captions", tuple(self.captions))
        _check_items("tag", self.tags)
        _check_items("attribute", self.attributes)
        _check_items("caption", self.captions)
        for items, scores in ((self.tags, self.tag_scores), (self.attributes, self.attribute_scores)):
            if scores is None:
                continue
            if len(scores) != len(items):
                raise FormatError("score list length differs from item list length")
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise FormatError("items must be sorted by descending score")

    def render(self) -> str:
        return render_description(self)


def render_description(d: Description) -> str:
    """Bulleted three-block rendering; no trailing newline."""
    lines = ["Tags:"]
    lines += [f"-{t}" for t in d.tags]
    lines += ["", "Attributes:"]
    lines += [f"-{a}" for a in d.attributes]
    lines += ["", "Captions:"]
    lines += [f"-{c}" for c in d.captions]
    return "\n".join(lines)


def _clean(text: str) -> str:
    return " ".join(text.split())


@contextmanager
def _stage(name: str):
    try:
        yield
    except TextBridgeError as exc:
        exc.stage = name
        exc.args = (f"{name} stage: {exc}",)
        raise


def build_description(image_ref, tag_index, attr_index, embedder, captioner,
                      cfg: DescriptionConfig | None = None) -> Description:
    """Describe one image from its embedding neighbours and sampled captions.

    Provider failures propagate with ``exc.stage`` set to ``tag``,
    ``attribute`` or ``caption`` and the stage prefixed to the message.
    """
    cfg = cfg or DescriptionConfig()
    with _stage("tag"):
        query = embedder.embed(image_ref)
        tags = top_k(tag_index, query, cfg.num_tags)
    with _stage("attribute"):
        attributes = top_k(attr_index, query, cfg.num_attributes)
    with _stage("caption"):
        captions = captioner.generate_captions(image_ref, cfg.num_captions)
    return Description(
        tags=tuple(t for t, _ in tags),
        attributes=tuple(a for a, _ in attributes),
        captions=tuple(_clean(c) for c in captions),
        image_id=str(image_ref),
        tag_scores=tuple(s for _, s in tags),
        attribute_scores=tuple(s for _, s in attributes),
    )


def attribute_vocabulary(tags, provider) -> list[str]:
    """Ask ``provider`` for distinguishing features of each tag.

    Each feature is attached to its tag (``"<tag> which <feature>"``);
    duplicates are dropped, keeping first-seen order.
    """
    out: dict[str, None] = {}
    for tag in tags:
        try:
            features = provider.generate_attributes(tag)
        except ProviderError as exc:
            exc.args = (f"attributes for tag {tag!r}: {exc}",)
            raise
        for f in features:
            out.setdefault(_clean(compose_attribute(tag, f)), None)
    return list(out)
