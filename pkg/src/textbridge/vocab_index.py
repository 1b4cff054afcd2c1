"""Exact top-K cosine retrieval over an embedded tag or attribute vocabulary."""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateEmbeddingError, DimError, FormatError, SizeError
from .providers.cache import INDEX_SUBDIR

TAG_TEMPLATE = "A photo of {tag}"


class IndexKind(str, enum.Enum):
    TAG = "tag"
    ATTRIBUTE = "attribute"


@dataclass(frozen=True)
class VocabEntry:
    text: str
    wrapped_text: str
    embedding: np.ndarray
    insertion_index: int


@dataclass(frozen=True)
class VocabIndex:
    entries: tuple[VocabEntry, ...]
    kind: IndexKind
    matrix: np.ndarray  # unit-norm rows, float64, row i == entries[i]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def texts(self) -> list[str]:
        return [e.text for e in self.entries]


def wrap_text(text: str, kind: IndexKind) -> str:
    # attribute phrases are embedded verbatim
    return TAG_TEMPLATE.format(tag=text) if kind == IndexKind.TAG else text


def _unit(vec, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimError(f"{what}: expected a non-empty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DegenerateEmbeddingError(f"{what}: non-finite embedding")
    norm = np.sqrt((v * v).sum())
    if norm == 0:
        raise DegenerateEmbeddingError(f"{what}: zero-norm embedding")
    return v / norm


def _assemble(texts: Sequence[str], matrix: np.ndarray, kind: IndexKind) -> VocabIndex:
    matrix.flags.writeable = False
    entries = tuple(VocabEntry(t, wrap_text(t, kind), matrix[i], i) for i, t in enumerate(texts))
    return VocabIndex(entries, kind, matrix)


def index_from_vectors(texts: Sequence[str], vectors, kind: IndexKind | str) -> VocabIndex:
    kind = IndexKind(kind)
    if len(texts) == 0:
        raise SizeError("cannot index an empty vocabulary")
    rows = [_unit(v, repr(t)) for t, v in zip(texts, vectors, strict=True)]
    dims = {r.size for r in rows}
    if len(dims) != 1:
        raise DimError(f"embeddings have mixed dimensions {sorted(dims)}")
    return _assemble(list(texts), np.vstack(rows), kind)


def vocabulary_digest(texts: Sequence[str], kind: IndexKind | str) -> str:
    h = hashlib.sha256(IndexKind(kind).value.encode())
    for t in texts:
        h.update(b"\0" + t.encode("utf-8"))
    return h.hexdigest()


def _cache_path(cache_dir, texts, kind, identity: str) -> Path:
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", identity)[:80]
    return Path(cache_dir) / INDEX_SUBDIR / safe / f"{vocabulary_digest(texts, kind)[:32]}.npz"


def build_index(texts: Sequence[str], kind: IndexKind | str, embedder, cache_dir=None) -> VocabIndex:
    """Embed every (wrapped) vocabulary entry and normalize to unit length.

    With ``cache_dir`` the normalized matrix is stored under a key made of
    the vocabulary hash and the embedder identity.
    """
    kind = IndexKind(kind)
    texts = list(texts)
    if not texts:
        raise SizeError("cannot index an empty vocabulary")
    path = None
    if cache_dir is not None:
        path = _cache_path(cache_dir, texts, kind, getattr(embedder, "identity", "anon"))
        if path.exists():
            try:
                with np.load(path, allow_pickle=False) as z:
                    matrix = z["matrix"]
                    if list(z["texts"]) == texts and np.all(np.isfinite(matrix)):
                        # rows were normalized before storing; reuse them bit-for-bit
                        return _assemble(texts, matrix.astype(np.float64), kind)
            except (OSError, ValueError, KeyError):
                path.unlink(missing_ok=True)
    vectors = []
    for t in texts:
        try:
            vectors.append(embedder.embed(wrap_text(t, kind)))
        except Exception as exc:
            exc.args = (f"embedding {t!r} failed: {exc}",)
            raise
    index = index_from_vectors(texts, vectors, kind)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, texts=np.array(texts), matrix=index.matrix)
        tmp.replace(path)
    return index


def cosine_scores(index: VocabIndex, query) -> np.ndarray:
    q = _unit(query, "query")
    if q.size != index.dim:
        raise DimError(f"query has dim {q.size}, index has dim {index.dim}")
    # row-wise reduction: identical rows always get bit-identical scores
    return (index.matrix * q).sum(axis=1)


def top_k(index: VocabIndex, query, k: int) -> list[tuple[str, float]]:
    """The ``k`` most cosine-similar entries, best first; ties go to the earlier entry."""
    n = len(index)
    if not 1 <= k <= n:
        raise SizeError(f"k={k} outside [1, {n}]")
    scores = cosine_scores(index, query)
    kth = np.partition(scores, n - k)[n - k]
    above = np.flatnonzero(scores > kth)
    tied = np.flatnonzero(scores == kth)[: k - above.size]
    chosen = np.concatenate([above, tied])
    order = chosen[np.lexsort((chosen, -scores[chosen]))]
    return [(index.entries[i].text, float(scores[i])) for i in order]


def load_vocabulary(path) -> list[str]:
    texts = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        t = line.strip()
        if not t:
            continue
        if t in seen:
            raise FormatError(f"duplicate vocabulary entry {t!r}", line=lineno)
        seen.add(t)
        texts.append(t)
    if not texts:
        raise FormatError(f"{path}: vocabulary file is empty")
    return texts
