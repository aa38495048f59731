"""Content-addressed evidence store with deterministic lexical retrieval.

Items are stored under the SHA-256 of their content bytes in an
append-only directory layout (`objects/<first2>/<hash>`) with a JSON
index carrying admissibility metadata.  Retrieval is plain token
overlap against the case keywords, restricted to source classes the
active policy authorizes; scoring is versioned so future upgrades stay
distinguishable in provenance.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .canonical import hash_value, sha256_hex
from .casekg import CaseKnowledgeGraph
from .clock import SystemClock
from .policy import PolicySet, policy_fingerprint
from .text import token_set

SCORING_VERSION = "token-overlap-v1"


class EvidenceError(ValueError):
    pass


class EmptyContent(EvidenceError):
    pass


class StoreUnavailable(RuntimeError):
    """Infrastructure failure (unreadable index); never a validation verdict."""


class IntegrityError(RuntimeError):
    """Stored content no longer matches its hash."""


@dataclass(frozen=True)
class EvidenceItem:
    hash: str
    corpus_id: str
    source_class: str
    title: str
    content: str
    ingested_at: str = ""
    agent: str = ""

    def to_obj(self) -> dict:
        return {
            "hash": self.hash,
            "corpus_id": self.corpus_id,
            "source_class": self.source_class,
            "title": self.title,
            "content": self.content,
            "ingested_at": self.ingested_at,
            "agent": self.agent,
        }


@dataclass(frozen=True)
class RetrievalSet:
    id: str
    items: tuple[tuple[str, int], ...]  # (item hash, score), score non-increasing
    k: int
    scoring_version: str
    kg_hash: str
    policy_fingerprint: str

    def hashes(self) -> tuple[str, ...]:
        return tuple(h for h, _ in self.items)

    def to_obj(self) -> dict:
        return {
            "id": self.id,
            "items": [{"hash": h, "score": s} for h, s in self.items],
            "k": self.k,
            "scoring_version": self.scoring_version,
            "kg_hash": self.kg_hash,
            "policy_fingerprint": self.policy_fingerprint,
        }


class StoreSnapshot:
    """Immutable view of the store contents at a point in time."""

    def __init__(self, items: Mapping[str, EvidenceItem], version: str):
        self._items = dict(items)
        self.version = version

    def lookup(self, item_hash: str) -> EvidenceItem | None:
        return self._items.get(item_hash)

    def items(self) -> list[EvidenceItem]:
        return [self._items[h] for h in sorted(self._items)]

    def __len__(self) -> int:
        return len(self._items)


class EvidenceStore:
    """Single-writer, content-addressed store rooted at a directory."""

    def __init__(self, root: Path | str, clock=None):
        self.root = Path(root)
        self.clock = clock or SystemClock()
        self._objects = self.root / "objects"
        self._index_path = self.root / "index.json"
        self._objects.mkdir(parents=True, exist_ok=True)
        if not self._index_path.exists():
            self._write_index({})

    def _write_index(self, index: dict) -> None:
        self._index_path.write_text(
            json.dumps(index, sort_keys=True, indent=1), encoding="utf-8"
        )

    def _read_index(self) -> dict:
        try:
            raw = self._index_path.read_text(encoding="utf-8")
            index = json.loads(raw)
        except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise StoreUnavailable(f"evidence index unreadable: {exc}")
        if not isinstance(index, dict):
            raise StoreUnavailable("evidence index is not an object")
        return index

    def _object_path(self, item_hash: str) -> Path:
        return self._objects / item_hash[:2] / item_hash

    def ingest(
        self,
        content: str | bytes,
        corpus_id: str,
        source_class: str,
        title: str = "",
        agent: str = "system",
        ledger=None,
    ) -> EvidenceItem:
        """Store one excerpt under its content hash. Re-ingesting identical
        bytes is idempotent and returns the existing item."""
        if isinstance(content, str):
            content_bytes = content.encode("utf-8")
        else:
            content_bytes = bytes(content)
        if not content_bytes:
            raise EmptyContent("evidence content must be non-empty")
        item_hash = sha256_hex(content_bytes)
        index = self._read_index()
        if item_hash in index:
            item = self._item_from_index(item_hash, index[item_hash])
        else:
            path = self._object_path(item_hash)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(content_bytes)
            index[item_hash] = {
                "corpus_id": corpus_id,
                "source_class": source_class,
                "title": title,
                "ingested_at": self.clock.now(),
                "agent": agent,
            }
            self._write_index(index)
            item = self._item_from_index(item_hash, index[item_hash])
        if ledger is not None:
            ledger.record_ingest(item)
        return item

    def _item_from_index(self, item_hash: str, meta: Mapping) -> EvidenceItem:
        path = self._object_path(item_hash)
        try:
            content_bytes = path.read_bytes()
        except OSError as exc:
            raise IntegrityError(f"object for {item_hash} missing: {exc}")
        if sha256_hex(content_bytes) != item_hash:
            raise IntegrityError(f"stored content does not match hash {item_hash}")
        return EvidenceItem(
            hash=item_hash,
            corpus_id=str(meta.get("corpus_id", "")),
            source_class=str(meta.get("source_class", "")),
            title=str(meta.get("title", "")),
            content=content_bytes.decode("utf-8"),
            ingested_at=str(meta.get("ingested_at", "")),
            agent=str(meta.get("agent", "")),
        )

    def lookup(self, item_hash: str) -> EvidenceItem | None:
        """Dereference a hash; absent hashes return None (the fabricated
        citation signal), corrupted entries raise IntegrityError."""
        index = self._read_index()
        meta = index.get(item_hash)
        if meta is None:
            return None
        return self._item_from_index(item_hash, meta)

    def snapshot(self) -> StoreSnapshot:
        index = self._read_index()
        items = {h: self._item_from_index(h, meta) for h, meta in sorted(index.items())}
        version = hash_value({h: items[h].to_obj() for h in items})
        return StoreSnapshot(items, version)


def admissible_items(snapshot: StoreSnapshot, policy: PolicySet) -> list[EvidenceItem]:
    """Items whose source class the policy authorizes and whose corpus lies
    within that class's scope."""
    out = []
    for item in snapshot.items():
        source_class = policy.source_class(item.source_class)
        if source_class is None:
            continue
        if source_class.scope and item.corpus_id not in source_class.scope:
            continue
        out.append(item)
    return out


def overlap_score(keywords: Iterable[str], content: str) -> int:
    return len(frozenset(keywords) & token_set(content))


def retrieve_evidence(
    snapshot: StoreSnapshot, kg: CaseKnowledgeGraph, policy: PolicySet
) -> RetrievalSet:
    """Top-k admissible items by keyword overlap; ties break by ascending
    hash, zero-overlap items are never retrieved."""
    scored: list[tuple[int, str]] = []
    for item in admissible_items(snapshot, policy):
        score = overlap_score(kg.keywords, item.content)
        if score > 0:
            scored.append((score, item.hash))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    top = scored[: policy.retrieval_k]
    items = tuple((item_hash, score) for score, item_hash in top)
    fingerprint = policy_fingerprint(policy)
    set_id = hash_value(
        {
            "kg_hash": kg.hash,
            "policy_fingerprint": fingerprint,
            "k": policy.retrieval_k,
            "hashes": [h for h, _ in items],
        }
    )
    return RetrievalSet(
        id=set_id,
        items=items,
        k=policy.retrieval_k,
        scoring_version=SCORING_VERSION,
        kg_hash=kg.hash,
        policy_fingerprint=fingerprint,
    )
