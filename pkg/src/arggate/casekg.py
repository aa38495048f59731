"""Case knowledge graphs.

Case input arrives pre-structured (entities, events, relations); this
module validates it and derives the keyword set that drives lexical
evidence retrieval.  Extraction is deterministic: the same case
document always yields the same graph, including keyword order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from .canonical import hash_value
from .text import tokenize


class CaseError(ValueError):
    def __init__(self, code: str, message: str, element: str | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.element = element


CASE_INVALID_DOCUMENT = "InvalidDocument"
CASE_EMPTY = "EmptyCase"
CASE_DUPLICATE_ENTITY_ID = "DuplicateEntityId"
CASE_DANGLING_PARTICIPANT = "DanglingParticipant"

ENTITY_KINDS = ("person", "org", "asset")


@dataclass(frozen=True)
class KgEntity:
    id: str
    kind: str
    attributes: tuple[tuple[str, str], ...] = ()

    def to_obj(self) -> dict:
        return {"id": self.id, "kind": self.kind, "attributes": dict(self.attributes)}


@dataclass(frozen=True)
class KgEvent:
    id: str
    label: str
    timestamp: str = ""
    participants: tuple[str, ...] = ()

    def to_obj(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "timestamp": self.timestamp,
            "participants": list(self.participants),
        }


@dataclass(frozen=True)
class KgRelation:
    src: str
    label: str
    dst: str

    def to_obj(self) -> dict:
        return {"src": self.src, "label": self.label, "dst": self.dst}


@dataclass(frozen=True)
class CaseKnowledgeGraph:
    case_id: str
    decision_class: str
    entities: tuple[KgEntity, ...]
    events: tuple[KgEvent, ...]
    relations: tuple[KgRelation, ...]
    keywords: tuple[str, ...]

    def to_obj(self) -> dict:
        return {
            "case_id": self.case_id,
            "decision_class": self.decision_class,
            "entities": [e.to_obj() for e in self.entities],
            "events": [e.to_obj() for e in self.events],
            "relations": [r.to_obj() for r in self.relations],
            "keywords": list(self.keywords),
        }

    @property
    def hash(self) -> str:
        return hash_value(self.to_obj())


def _require_str(obj: Mapping, key: str, element: str | None = None) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise CaseError(CASE_INVALID_DOCUMENT,
                        f"field '{key}' must be a non-empty string", element)
    return value


def build_case_knowledge_graph(source: Any) -> CaseKnowledgeGraph:
    """Validate a structured case document and derive retrieval keywords."""
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CaseError(CASE_INVALID_DOCUMENT, f"not valid UTF-8: {exc}")
    if isinstance(source, str):
        try:
            source = json.loads(source)
        except json.JSONDecodeError as exc:
            raise CaseError(CASE_INVALID_DOCUMENT, f"not valid JSON: {exc.msg}")
    if not isinstance(source, Mapping):
        raise CaseError(CASE_INVALID_DOCUMENT, "case root must be an object")

    case_id = _require_str(source, "case_id")
    decision_class = _require_str(source, "decision_class")

    raw_entities = source.get("entities", [])
    if not isinstance(raw_entities, list) or not raw_entities:
        raise CaseError(CASE_EMPTY, "case must declare at least one entity")
    entities: list[KgEntity] = []
    entity_ids: set[str] = set()
    for raw in sorted(raw_entities, key=lambda o: o.get("id", "") if isinstance(o, Mapping) else ""):
        if not isinstance(raw, Mapping):
            raise CaseError(CASE_INVALID_DOCUMENT, "entity entries must be objects")
        eid = _require_str(raw, "id")
        if eid in entity_ids:
            raise CaseError(CASE_DUPLICATE_ENTITY_ID, "duplicate entity id", eid)
        entity_ids.add(eid)
        kind = raw.get("kind")
        if kind not in ENTITY_KINDS:
            raise CaseError(CASE_INVALID_DOCUMENT,
                            f"entity kind must be one of {ENTITY_KINDS}", eid)
        attrs = raw.get("attributes", {})
        if not isinstance(attrs, Mapping) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in attrs.items()
        ):
            raise CaseError(CASE_INVALID_DOCUMENT,
                            "attributes must map strings to strings", eid)
        entities.append(KgEntity(id=eid, kind=kind,
                                 attributes=tuple(sorted(attrs.items()))))

    raw_events = source.get("events", [])
    if not isinstance(raw_events, list):
        raise CaseError(CASE_INVALID_DOCUMENT, "'events' must be an array")
    events: list[KgEvent] = []
    for raw in sorted(raw_events, key=lambda o: o.get("id", "") if isinstance(o, Mapping) else ""):
        if not isinstance(raw, Mapping):
            raise CaseError(CASE_INVALID_DOCUMENT, "event entries must be objects")
        evid = _require_str(raw, "id")
        label = _require_str(raw, "label", evid)
        participants = raw.get("participants", [])
        if not isinstance(participants, list):
            raise CaseError(CASE_INVALID_DOCUMENT, "participants must be an array", evid)
        for pid in participants:
            if pid not in entity_ids:
                raise CaseError(CASE_DANGLING_PARTICIPANT,
                                f"event participant '{pid}' is not an entity", evid)
        events.append(KgEvent(id=evid, label=label,
                              timestamp=str(raw.get("timestamp", "")),
                              participants=tuple(participants)))

    raw_relations = source.get("relations", [])
    if not isinstance(raw_relations, list):
        raise CaseError(CASE_INVALID_DOCUMENT, "'relations' must be an array")
    relations: list[KgRelation] = []
    for raw in raw_relations:
        if not isinstance(raw, Mapping):
            raise CaseError(CASE_INVALID_DOCUMENT, "relation entries must be objects")
        src = _require_str(raw, "src")
        dst = _require_str(raw, "dst")
        label = _require_str(raw, "label")
        for endpoint in (src, dst):
            if endpoint not in entity_ids:
                raise CaseError(CASE_DANGLING_PARTICIPANT,
                                f"relation endpoint '{endpoint}' is not an entity")
        relations.append(KgRelation(src=src, label=label, dst=dst))
    relations.sort(key=lambda r: (r.src, r.label, r.dst))

    words: list[str] = tokenize(decision_class)
    for entity in entities:
        for key, value in entity.attributes:
            words.extend(tokenize(key))
            words.extend(tokenize(value))
    for event in events:
        words.extend(tokenize(event.label))
    for relation in relations:
        words.extend(tokenize(relation.label))
    keywords = tuple(sorted(set(words)))

    return CaseKnowledgeGraph(
        case_id=case_id,
        decision_class=decision_class,
        entities=tuple(entities),
        events=tuple(events),
        relations=tuple(relations),
        keywords=keywords,
    )
