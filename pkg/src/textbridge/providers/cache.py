"""Content-addressed on-disk cache for provider responses.

Layout: ``{root}/{provider_id}/{digest[:2]}/{digest}``. Each entry stores
the SHA-256 of its payload on the first line; entries that fail the check
are deleted and reported as misses.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from pathlib import Path


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def request_digest(provider_id: str, operation: str, body) -> str:
    return hashlib.sha256(canonical_json({"provider": provider_id, "op": operation, "body": body})).hexdigest()


def _safe(provider_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", provider_id)[:100] or "_"


# subdirectory used by vocab_index for cached index matrices
INDEX_SUBDIR = "vocab"


class ContentCache:
    def __init__(self, root):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0

    def path(self, provider_id: str, digest: str) -> Path:
        return self.root / _safe(provider_id) / digest[:2] / digest

    def lookup(self, provider_id: str, digest: str) -> bytes | None:
        p = self.path(provider_id, digest)
        try:
            raw = p.read_bytes()
        except FileNotFoundError:
            self.misses += 1
            return None
        head, sep, payload = raw.partition(b"\n")
        if not sep or hashlib.sha256(payload).hexdigest().encode() != head:
            p.unlink(missing_ok=True)
            self.misses += 1
            return None
        self.hits += 1
        return payload

    def store(self, provider_id: str, digest: str, payload: bytes) -> None:
        p = self.path(provider_id, digest)
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(hashlib.sha256(payload).hexdigest().encode() + b"\n" + payload)
            # atomic: racing stores of the same key leave one complete entry
            os.replace(tmp, p)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def gc(self) -> dict:
        """Drop corrupt entries and stale temp files; returns counts.

        The ``vocab/`` subtree holds vocabulary indexes, which check
        themselves on load, and is left alone.
        """
        removed = kept = 0
        if not self.root.exists():
            return {"removed": 0, "kept": 0}
        for p in sorted(self.root.rglob("*")):
            if not p.is_file() or p.relative_to(self.root).parts[0] == INDEX_SUBDIR:
                continue
            if p.name.startswith(".tmp-"):
                p.unlink()
                removed += 1
                continue
            raw = p.read_bytes()
            head, sep, payload = raw.partition(b"\n")
            if sep and hashlib.sha256(payload).hexdigest().encode() == head:
                kept += 1
            else:
                p.unlink()
                removed += 1
        return {"removed": removed, "kept": kept}
