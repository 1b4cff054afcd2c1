"""Question instruction templates wrapping a description and the category set.

Three frozen formats ship as package data:

* ``t1`` standard: description plus candidate categories
* ``t2`` domain-aware: as ``t1`` with the image's domain named
* ``t3`` simple: the description alone

Any change to the template bytes is a format break, since a finetuned
model is sensitive to exact whitespace.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .dataset_io import CategorySet
from .errors import ArgError, MissingDescriptionError


class TemplateVariant(enum.Enum):
    STANDARD = "t1"
    DOMAIN_AWARE = "t2"
    SIMPLE = "t3"

    @classmethod
    def parse(cls, value) -> "TemplateVariant":
        if isinstance(value, cls):
            return value
        aliases = {"standard": cls.STANDARD, "domain": cls.DOMAIN_AWARE,
                   "domain_aware": cls.DOMAIN_AWARE, "domain-aware": cls.DOMAIN_AWARE,
                   "simple": cls.SIMPLE}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ArgError(f"unknown template variant {value!r}") from None


@lru_cache(maxsize=None)
def template_text(variant: TemplateVariant) -> str:
    ref = resources.files("textbridge.templates").joinpath(f"{variant.value}.txt")
    return ref.read_bytes().decode("utf-8")


@dataclass(frozen=True)
class PromptInstance:
    text: str
    variant: TemplateVariant
    category_set: CategorySet
    sample_id: str | None = None


def render_prompt(description_text: str, cs: CategorySet,
                  variant: TemplateVariant | str = TemplateVariant.STANDARD,
                  domain_name: str | None = None, sample_id: str | None = None) -> PromptInstance:
    variant = TemplateVariant.parse(variant)
    if variant is TemplateVariant.DOMAIN_AWARE and not domain_name:
        raise ArgError("the domain-aware template needs a domain name")
    text = template_text(variant).format(
        description=description_text,
        categories=", ".join(cs.names),
        domain=domain_name or "",
    )
    return PromptInstance(text, variant, cs, sample_id)


def prompt_for_sample(sample, cs: CategorySet, variant=TemplateVariant.STANDARD) -> PromptInstance:
    """Render the prompt of a described dataset record."""
    if sample.description is None:
        raise MissingDescriptionError(sample.id)
    return render_prompt(sample.description.render(), cs, variant,
                         domain_name=sample.domain, sample_id=sample.id)
