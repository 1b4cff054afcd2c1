"""Generators for small synthetic cross-domain text datasets.

Descriptions mix class-indicative words with per-domain distractor words,
which is enough structure for a bag-of-tokens model to exhibit a domain
gap. Used by the demo commands and the test-suite.
"""

from __future__ import annotations

import numpy as np

from .dataset_io import CategorySet, MultiDomainDataset, SampleRecord
from .description import Description

PACS_CATEGORIES = ("dog", "elephant", "giraffe", "guitar", "horse", "house", "person")
PACS_DOMAIN_SIZES = {"A": 2048, "C": 2344, "P": 1670, "S": 3929}

CLASS_WORDS = {
    "dog": ("dog", "puppy", "canine", "terrier", "retriever"),
    "elephant": ("elephant", "tusk", "trunk", "pachyderm", "mammoth"),
    "giraffe": ("giraffe", "savanna", "spotted", "longneck", "ossicone"),
    "guitar": ("guitar", "strings", "fretboard", "acoustic", "chord"),
    "horse": ("horse", "stallion", "mane", "saddle", "pony"),
    "house": ("house", "roof", "chimney", "schoolhouse", "porch"),
    "person": ("person", "man", "woman", "face", "portrait"),
}

# synonyms never seen in the default source domains
TARGET_CLASS_WORDS = {
    "dog": ("hound", "mutt"),
    "elephant": ("jumbo", "ivory"),
    "giraffe": ("camelopard", "okapi"),
    "guitar": ("ukulele", "banjo"),
    "horse": ("mare", "colt"),
    "house": ("cottage", "bungalow"),
    "person": ("astronaut", "pedestrian"),
}

DOMAIN_WORDS = {
    "A": ("painting", "canvas", "oil", "brushstroke", "gallery"),
    "C": ("cartoon", "animated", "comic", "illustration", "clipart"),
    "P": ("photo", "camera", "lens", "photograph", "snapshot"),
    "S": ("sketch", "drawing", "pencil", "charcoal", "lineart"),
    "T": ("pixelated", "blurry", "thermal", "grainy", "lowres"),
}

FILLERS = ("object", "scene", "background", "small", "large", "colorful", "shape",
           "outline", "center", "corner", "texture", "pattern")

FEATURES = ("has a distinctive shape", "is shown from the side", "has visible texture",
            "appears in the foreground", "is drawn with bold lines", "has a plain background")


def _description(rng, class_words, domain_words, cfg=(5, 5, 5)) -> Description:
    n_tags, n_attrs, n_caps = cfg

    def cls():
        return class_words[rng.integers(len(class_words))]

    def dom():
        return domain_words[rng.integers(len(domain_words))]

    def fill():
        return FILLERS[rng.integers(len(FILLERS))]

    tag_pool = [cls(), cls(), dom(), dom(), fill()]
    tags = [tag_pool[i] for i in rng.permutation(len(tag_pool))][:n_tags]
    attributes = [f"{cls() if rng.random() < 0.6 else fill()} which "
                  f"{FEATURES[rng.integers(len(FEATURES))]}" for _ in range(n_attrs)]
    captions = [f"a {dom()} of a {cls()} with a {fill()} {fill()}" for _ in range(n_caps)]
    return Description(tuple(tags), tuple(attributes), tuple(captions))


def make_dg_dataset(domains=("A", "C", "P", "S"), per_domain: int = 200, seed: int = 0,
                    categories=PACS_CATEGORIES) -> MultiDomainDataset:
    """Balanced classes; class words shared by all domains, distractors per domain."""
    rng = np.random.default_rng(seed)
    cs = CategorySet(tuple(categories))
    records = []
    for d in domains:
        for i in range(per_domain):
            label = cs.names[i % len(cs)]
            desc = _description(rng, CLASS_WORDS[label], DOMAIN_WORDS[d])
            records.append(SampleRecord(f"{d}-{i:05d}", d, label, None, desc))
    return MultiDomainDataset.from_records(records, cs)


def make_uda_task(n_source: int = 1600, n_target: int = 1600, shared_prob: float = 0.6,
                  seed: int = 0, source_domain: str = "P", target_domain: str = "T",
                  categories=PACS_CATEGORIES) -> MultiDomainDataset:
    """Shifted pair of domains for pseudo-label adaptation.

    Target samples always carry target-only class synonyms, but only a
    ``shared_prob`` fraction also mention the class words seen in the
    source. Target distractors are disjoint from source distractors.
    """
    rng = np.random.default_rng(seed)
    cs = CategorySet(tuple(categories))
    records = []
    for i in range(n_source):
        label = cs.names[i % len(cs)]
        desc = _description(rng, CLASS_WORDS[label], DOMAIN_WORDS[source_domain])
        records.append(SampleRecord(f"{source_domain}-{i:05d}", source_domain, label, None, desc))
    for i in range(n_target):
        label = cs.names[i % len(cs)]
        words = TARGET_CLASS_WORDS[label]
        if rng.random() < shared_prob:
            words = words + CLASS_WORDS[label][:1]
        desc = _description(rng, words, DOMAIN_WORDS[target_domain])
        records.append(SampleRecord(f"{target_domain}-{i:05d}", target_domain, label, None, desc))
    return MultiDomainDataset.from_records(records, cs)


def make_pacs_shaped(seed: int = 0, sizes=None) -> MultiDomainDataset:
    """9,991 described samples over four domains with the PACS categories."""
    sizes = sizes or PACS_DOMAIN_SIZES
    rng = np.random.default_rng(seed)
    cs = CategorySet(PACS_CATEGORIES)
    records = []
    for d, n in sizes.items():
        for i in range(n):
            label = cs.names[int(rng.integers(len(cs)))]
            desc = _description(rng, CLASS_WORDS[label], DOMAIN_WORDS[d])
            records.append(SampleRecord(f"{d}-{i:05d}", d, label, f"{d}/{i:05d}.jpg", desc))
    return MultiDomainDataset.from_records(records, cs)
