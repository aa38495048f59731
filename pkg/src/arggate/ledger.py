"""Decision provenance: PROV-style records on a hash-chained log.

The ledger is a newline-delimited file of canonical JSON entries.  Each
entry hashes (seq, timestamp, payload, previous hash), so any byte-level
mutation of a committed entry is detectable.  Payloads are entity,
activity, agent or relation records; together they let an auditor
reconstruct which evidence supported a claim, which model produced a
fragment, and which human approved or modified the result.

Truncating the tail is not detectable from the file alone; anchor the
head hash externally (`arggate ledger verify` prints it).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .canonical import ZERO_HASH, canonical_bytes, sha256_hex
from .clock import SystemClock

ENTITY_KINDS = (
    "ag_node", "ag_graph", "evidence_item", "retrieval_set", "draft_doc",
    "policy", "prompt_template", "model_card", "case_kg", "decision_package",
)
ACTIVITY_KINDS = (
    "ingest", "build_kg", "retrieve", "draft", "repair", "validate",
    "approve", "edit", "override", "persist",
)
AGENT_KINDS = ("human", "model", "software")
RELATION_NAMES = (
    "wasGeneratedBy", "used", "wasAssociatedWith", "wasAttributedTo", "wasDerivedFrom",
)

# Attributes a draft activity must carry for provenance-complete output.
GENERATION_ATTRS = (
    "model_id", "model_version",
    "prompt_template_id", "prompt_template_version",
    "retrieval_set_id",
)


class ChainCorrupt(RuntimeError):
    pass


class AuditError(KeyError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class ProvEntity:
    id: str
    kind: str
    content_hash: str
    attributes: tuple[tuple[str, str], ...] = ()

    def payload(self) -> dict:
        return {
            "record_kind": "entity",
            "id": self.id,
            "kind": self.kind,
            "content_hash": self.content_hash,
            "attributes": dict(self.attributes),
        }


@dataclass(frozen=True)
class ProvActivity:
    id: str
    kind: str
    started: str
    ended: str
    agent: str = ""
    used: tuple[str, ...] = ()
    generated: tuple[str, ...] = ()
    attributes: tuple[tuple[str, str], ...] = ()

    def attr(self, key: str) -> str | None:
        for k, v in self.attributes:
            if k == key:
                return v
        return None

    def payload(self) -> dict:
        return {
            "record_kind": "activity",
            "id": self.id,
            "kind": self.kind,
            "started": self.started,
            "ended": self.ended,
            "agent": self.agent,
            "used": list(self.used),
            "generated": list(self.generated),
            "attributes": dict(self.attributes),
        }


@dataclass(frozen=True)
class ProvAgent:
    id: str
    kind: str
    display: str = ""

    def payload(self) -> dict:
        return {
            "record_kind": "agent",
            "id": self.id,
            "kind": self.kind,
            "display": self.display,
        }


def relation_payload(name: str, src: str, dst: str) -> dict:
    if name not in RELATION_NAMES:
        raise ValueError(f"unknown PROV relation {name!r}")
    return {"record_kind": "relation", "relation": name, "src": src, "dst": dst}


@dataclass(frozen=True)
class LedgerEntry:
    seq: int
    timestamp: str
    payload: dict
    prev_hash: str
    entry_hash: str

    def to_obj(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "payload": self.payload,
            "prev_hash": self.prev_hash,
            "entry_hash": self.entry_hash,
        }


def _entry_hash(seq: int, timestamp: str, payload: Mapping, prev_hash: str) -> str:
    material = b"|".join(
        [str(seq).encode(), timestamp.encode(), canonical_bytes(payload), prev_hash.encode()]
    )
    return sha256_hex(material)


class Ledger:
    """Append-only, single-writer, hash-chained provenance log."""

    def __init__(self, path: Path | str, clock=None, durable: bool = True):
        self.path = Path(path)
        self.clock = clock or SystemClock()
        self.durable = durable
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._entries: list[LedgerEntry] = []
        self._corrupt_at: int | None = None
        if self.path.exists():
            self._load()

    # -- chain mechanics ----------------------------------------------------

    def _load(self) -> None:
        raw = self.path.read_bytes()
        lines = raw.split(b"\n")
        if lines and lines[-1] == b"":
            lines.pop()
        prev = ZERO_HASH
        for i, line in enumerate(lines):
            entry = self._decode_line(i, line, prev)
            if entry is None:
                self._corrupt_at = i
                break
            self._entries.append(entry)
            prev = entry.entry_hash

    @staticmethod
    def _decode_line(seq: int, line: bytes, prev: str) -> LedgerEntry | None:
        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return None
        if not isinstance(obj, dict):
            return None
        try:
            entry = LedgerEntry(
                seq=obj["seq"],
                timestamp=obj["timestamp"],
                payload=obj["payload"],
                prev_hash=obj["prev_hash"],
                entry_hash=obj["entry_hash"],
            )
        except (KeyError, TypeError):
            return None
        # The committed line must be the canonical encoding of the entry:
        # this closes the gap where a byte flip leaves the parsed value
        # intact (e.g. a float exponent case change).
        if canonical_bytes(entry.to_obj()) != line:
            return None
        if entry.seq != seq or entry.prev_hash != prev:
            return None
        if _entry_hash(entry.seq, entry.timestamp, entry.payload, entry.prev_hash) != entry.entry_hash:
            return None
        return entry

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def head_hash(self) -> str:
        return self._entries[-1].entry_hash if self._entries else ZERO_HASH

    def entries(self) -> list[LedgerEntry]:
        return list(self._entries)

    def append(self, payload: Mapping) -> LedgerEntry:
        if self._corrupt_at is not None:
            raise ChainCorrupt(
                f"refusing to append: chain is corrupt at seq {self._corrupt_at}"
            )
        payload = json.loads(canonical_bytes(payload))  # normalize + detach
        seq = len(self._entries)
        timestamp = self.clock.now()
        prev = self.head_hash
        entry = LedgerEntry(
            seq=seq,
            timestamp=timestamp,
            payload=payload,
            prev_hash=prev,
            entry_hash=_entry_hash(seq, timestamp, payload, prev),
        )
        line = canonical_bytes(entry.to_obj()) + b"\n"
        with open(self.path, "ab") as fh:
            fh.write(line)
            fh.flush()
            if self.durable:
                os.fsync(fh.fileno())
        self._entries.append(entry)
        return entry

    def verify_chain(self) -> int | None:
        """Re-verify the whole file; returns the first bad seq, or None."""
        raw = self.path.read_bytes() if self.path.exists() else b""
        lines = raw.split(b"\n")
        if lines and lines[-1] == b"":
            lines.pop()
        prev = ZERO_HASH
        for i, line in enumerate(lines):
            entry = self._decode_line(i, line, prev)
            if entry is None:
                return i
            prev = entry.entry_hash
        return None

    # -- typed appends ------------------------------------------------------

    def record_entity(self, entity: ProvEntity) -> LedgerEntry:
        return self.append(entity.payload())

    def record_activity(self, activity: ProvActivity) -> list[LedgerEntry]:
        entries = [self.append(activity.payload())]
        if activity.agent:
            entries.append(
                self.append(relation_payload("wasAssociatedWith", activity.id, activity.agent))
            )
        for used in activity.used:
            entries.append(self.append(relation_payload("used", activity.id, used)))
        for generated in activity.generated:
            entries.append(
                self.append(relation_payload("wasGeneratedBy", generated, activity.id))
            )
        return entries

    def record_agent(self, agent: ProvAgent) -> LedgerEntry:
        return self.append(agent.payload())

    def ensure_agent(self, agent: ProvAgent) -> None:
        if self.find_agent(agent.id) is None:
            self.record_agent(agent)

    def record_ingest(self, item) -> None:
        entity_id = f"ent-ev-{item.hash[:12]}"
        if self.find_entity(entity_id) is None:
            self.record_entity(
                ProvEntity(
                    id=entity_id,
                    kind="evidence_item",
                    content_hash=item.hash,
                    attributes=(
                        ("corpus_id", item.corpus_id),
                        ("source_class", item.source_class),
                        ("title", item.title),
                    ),
                )
            )
            self.record_activity(
                ProvActivity(
                    id=f"act-ingest-{item.hash[:12]}",
                    kind="ingest",
                    started=item.ingested_at,
                    ended=item.ingested_at,
                    agent=item.agent,
                    generated=(entity_id,),
                )
            )

    # -- typed reads --------------------------------------------------------

    def _payloads(self, record_kind: str) -> Iterable[dict]:
        for entry in self._entries:
            if entry.payload.get("record_kind") == record_kind:
                yield entry.payload

    def find_agent(self, agent_id: str) -> ProvAgent | None:
        for obj in self._payloads("agent"):
            if obj.get("id") == agent_id:
                return ProvAgent(id=obj["id"], kind=obj["kind"], display=obj.get("display", ""))
        return None

    def find_entity(self, entity_id: str) -> dict | None:
        for obj in self._payloads("entity"):
            if obj.get("id") == entity_id:
                return obj
        return None

    def find_activity(self, activity_id: str) -> ProvActivity | None:
        # Latest wins: a re-run may record a newer activity under the
        # same deterministic id.
        found = None
        for obj in self._payloads("activity"):
            if obj.get("id") == activity_id:
                found = obj
        return _activity_from_payload(found) if found else None

    def activities(self, kind: str | None = None) -> list[ProvActivity]:
        out = []
        for obj in self._payloads("activity"):
            if kind is None or obj.get("kind") == kind:
                out.append(_activity_from_payload(obj))
        return out

    def used_entities(self, activity_id: str) -> set[str]:
        out = set()
        for obj in self._payloads("relation"):
            if obj.get("relation") == "used" and obj.get("src") == activity_id:
                out.add(obj["dst"])
        return out

    # -- PROV export ---------------------------------------------------------

    def to_prov_json(self) -> dict:
        """W3C-PROV-shaped export: entity/activity/agent maps plus the five
        relation collections."""
        doc: dict[str, dict] = {key: {} for key in ("entity", "activity", "agent")}
        for name in RELATION_NAMES:
            doc[name] = {}
        rel_counter = 0
        for entry in self._entries:
            payload = entry.payload
            kind = payload.get("record_kind")
            if kind == "entity":
                doc["entity"][payload["id"]] = {
                    "prov:type": payload["kind"],
                    "content_hash": payload["content_hash"],
                    **payload.get("attributes", {}),
                }
            elif kind == "activity":
                doc["activity"][payload["id"]] = {
                    "prov:type": payload["kind"],
                    "prov:startTime": payload["started"],
                    "prov:endTime": payload["ended"],
                    **payload.get("attributes", {}),
                }
            elif kind == "agent":
                doc["agent"][payload["id"]] = {
                    "prov:type": payload["kind"],
                    "prov:label": payload.get("display", ""),
                }
            elif kind == "relation":
                rel_counter += 1
                name = payload["relation"]
                key_src, key_dst = _RELATION_KEYS[name]
                doc[name][f"_:r{rel_counter}"] = {
                    key_src: payload["src"],
                    key_dst: payload["dst"],
                }
        return doc


_RELATION_KEYS = {
    "wasGeneratedBy": ("prov:entity", "prov:activity"),
    "used": ("prov:activity", "prov:entity"),
    "wasAssociatedWith": ("prov:activity", "prov:agent"),
    "wasAttributedTo": ("prov:entity", "prov:agent"),
    "wasDerivedFrom": ("prov:generatedEntity", "prov:usedEntity"),
}


def _activity_from_payload(obj: Mapping) -> ProvActivity:
    return ProvActivity(
        id=obj["id"],
        kind=obj["kind"],
        started=obj.get("started", ""),
        ended=obj.get("ended", ""),
        agent=obj.get("agent", ""),
        used=tuple(obj.get("used", ())),
        generated=tuple(obj.get("generated", ())),
        attributes=tuple(sorted((k, str(v)) for k, v in obj.get("attributes", {}).items())),
    )


# ---------------------------------------------------------------------------
# Candidate provenance (pre-acceptance) and the emitted record
# ---------------------------------------------------------------------------


@dataclass
class ProvenanceDraft:
    """Provenance assembled while a draft is still a candidate; the
    validation kernel checks generation references against it."""

    activities: dict[str, ProvActivity] = field(default_factory=dict)
    agents: dict[str, ProvAgent] = field(default_factory=dict)

    def add_activity(self, activity: ProvActivity) -> None:
        self.activities[activity.id] = activity

    def add_agent(self, agent: ProvAgent) -> None:
        self.agents[agent.id] = agent

    def agent_kind(self, agent_id: str) -> str | None:
        agent = self.agents.get(agent_id)
        return agent.kind if agent else None

    def to_obj(self) -> dict:
        return {
            "activities": {aid: a.payload() for aid, a in sorted(self.activities.items())},
            "agents": {aid: a.payload() for aid, a in sorted(self.agents.items())},
        }

    @classmethod
    def from_obj(cls, obj: Mapping) -> "ProvenanceDraft":
        draft = cls()
        for payload in obj.get("activities", {}).values():
            draft.add_activity(_activity_from_payload(payload))
        for payload in obj.get("agents", {}).values():
            draft.add_agent(
                ProvAgent(id=payload["id"], kind=payload["kind"],
                          display=payload.get("display", ""))
            )
        return draft


@dataclass(frozen=True)
class ProvenanceRecord:
    """Seq range and key ids of the ledger entries emitted for one
    accepted graph."""

    first_seq: int
    last_seq: int
    graph_entity_id: str
    draft_activity_ids: tuple[str, ...]
    validate_activity_id: str
    persist_activity_id: str
    package_entity_id: str

    def to_obj(self) -> dict:
        return {
            "first_seq": self.first_seq,
            "last_seq": self.last_seq,
            "graph_entity_id": self.graph_entity_id,
            "draft_activity_ids": list(self.draft_activity_ids),
            "validate_activity_id": self.validate_activity_id,
            "persist_activity_id": self.persist_activity_id,
            "package_entity_id": self.package_entity_id,
        }


def graph_entity_id(graph_id: str) -> str:
    return f"ent-graph-{graph_id[:12]}"


def evidence_entity_id(item_hash: str) -> str:
    return f"ent-ev-{item_hash[:12]}"


def emit_provenance(
    ledger: Ledger,
    *,
    graph,
    kg,
    retrieval,
    snapshot,
    policy,
    policy_fp: str,
    prompt_template_hash: str,
    prov_draft: ProvenanceDraft,
    validate_activity: ProvActivity,
) -> ProvenanceRecord:
    """Write the full provenance story for an accepted graph.

    Emits entities for the graph, its AI-generated nodes, the retrieval
    set, policy and prompt template; the drafting/repair/edit/approve
    activities accumulated in `prov_draft`; the validate activity; and a
    persist activity generating the decision-package entity.  Entities
    always precede the activities that reference them.
    """
    first_seq = len(ledger)
    if graph.id is None:
        raise ValueError("emit_provenance requires a graph with an assigned id")
    g_entity = graph_entity_id(graph.id)
    policy_entity = f"ent-policy-{policy_fp[:12]}"
    kg_entity = f"ent-kg-{kg.hash[:12]}"
    retrieval_entity = f"ent-ret-{retrieval.id[:12]}"

    for agent in sorted(prov_draft.agents.values(), key=lambda a: a.id):
        ledger.ensure_agent(agent)
    if ledger.find_entity(policy_entity) is None:
        ledger.record_entity(
            ProvEntity(
                id=policy_entity,
                kind="policy",
                content_hash=policy_fp,
                attributes=(("policy_id", policy.id), ("policy_version", policy.version)),
            )
        )
    prompt_entity = None
    for activity in prov_draft.activities.values():
        template_id = activity.attr("prompt_template_id")
        template_version = activity.attr("prompt_template_version")
        if template_id and template_version:
            prompt_entity = f"ent-prompt-{template_id}-v{template_version}"
            if ledger.find_entity(prompt_entity) is None:
                ledger.record_entity(
                    ProvEntity(
                        id=prompt_entity,
                        kind="prompt_template",
                        content_hash=prompt_template_hash,
                        attributes=(
                            ("template_id", template_id),
                            ("template_version", template_version),
                        ),
                    )
                )
            break
    if ledger.find_entity(kg_entity) is None:
        ledger.record_entity(
            ProvEntity(
                id=kg_entity,
                kind="case_kg",
                content_hash=kg.hash,
                attributes=(("case_id", kg.case_id),),
            )
        )
    if ledger.find_entity(retrieval_entity) is None:
        ledger.record_entity(
            ProvEntity(
                id=retrieval_entity,
                kind="retrieval_set",
                content_hash=retrieval.id,
                attributes=(
                    ("k", str(retrieval.k)),
                    ("scoring_version", retrieval.scoring_version),
                ),
            )
        )
    for item_hash in retrieval.hashes():
        entity_id = evidence_entity_id(item_hash)
        if ledger.find_entity(entity_id) is None:
            item = snapshot.lookup(item_hash)
            ledger.record_entity(
                ProvEntity(
                    id=entity_id,
                    kind="evidence_item",
                    content_hash=item_hash,
                    attributes=(
                        ("corpus_id", item.corpus_id if item else ""),
                        ("source_class", item.source_class if item else ""),
                        ("title", item.title if item else ""),
                    ),
                )
            )

    ledger.record_entity(
        ProvEntity(
            id=g_entity,
            kind="ag_graph",
            content_hash=graph.id,
            attributes=(("case_id", graph.meta.case_id),),
        )
    )
    model_agents = [a.id for a in prov_draft.agents.values() if a.kind == "model"]
    for node in graph.nodes:
        if node.generator == "ai":
            node_entity = f"ent-node-{graph.id[:12]}-{node.id}"
            ledger.record_entity(
                ProvEntity(
                    id=node_entity,
                    kind="ag_node",
                    content_hash=hash_node(graph.id, node.id),
                    attributes=(("node_id", node.id), ("graph_id", graph.id)),
                )
            )
            for agent_id in model_agents:
                ledger.append(relation_payload("wasAttributedTo", node_entity, agent_id))
    ledger.append(relation_payload("wasDerivedFrom", g_entity, kg_entity))
    ledger.append(relation_payload("wasDerivedFrom", g_entity, retrieval_entity))

    draft_ids = []
    for activity in sorted(prov_draft.activities.values(), key=lambda a: a.id):
        ledger.record_activity(activity)
        if activity.kind in ("draft", "repair"):
            draft_ids.append(activity.id)
    ledger.record_activity(validate_activity)

    package_entity = f"ent-pkg-{graph.id[:12]}"
    stamp = ledger.clock.now()
    persist_activity = ProvActivity(
        id=f"act-persist-{graph.id[:12]}",
        kind="persist",
        started=stamp,
        ended=stamp,
        agent="agent-system",
        used=(g_entity,),
        generated=(package_entity,),
        attributes=(("graph_id", graph.id), ("case_id", graph.meta.case_id)),
    )
    ledger.ensure_agent(ProvAgent(id="agent-system", kind="software", display="pipeline"))
    ledger.record_entity(
        ProvEntity(
            id=package_entity,
            kind="decision_package",
            content_hash=graph.id,
            attributes=(("graph_id", graph.id),),
        )
    )
    ledger.record_activity(persist_activity)

    return ProvenanceRecord(
        first_seq=first_seq,
        last_seq=len(ledger) - 1,
        graph_entity_id=g_entity,
        draft_activity_ids=tuple(draft_ids),
        validate_activity_id=validate_activity.id,
        persist_activity_id=persist_activity.id,
        package_entity_id=package_entity,
    )


def hash_node(graph_id: str, node_id: str) -> str:
    return sha256_hex(f"{graph_id}:{node_id}".encode("utf-8"))


# ---------------------------------------------------------------------------
# Audit reconstruction queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClaimEvidenceAudit:
    claim_id: str
    graph_id: str
    evidence: tuple[str, ...]      # evidence item hashes
    assumptions: tuple[str, ...]   # assumption node ids backing the claim

    def to_obj(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "graph_id": self.graph_id,
            "evidence": list(self.evidence),
            "assumptions": list(self.assumptions),
        }


class AuditIndex:
    """Read-only audit queries over the ledger plus the persisted graphs."""

    def __init__(self, ledger: Ledger, graphs_dir: Path | str):
        self.ledger = ledger
        self.graphs_dir = Path(graphs_dir)

    def _graph_ids(self) -> list[str]:
        if not self.graphs_dir.exists():
            return []
        return sorted(p.name for p in self.graphs_dir.iterdir() if (p / "ag.json").exists())

    def load_graph(self, graph_id: str):
        from .model import parse_and_normalize

        path = self.graphs_dir / graph_id / "ag.json"
        if not path.exists():
            raise AuditError("UnknownGraph", f"no persisted graph {graph_id}")
        return parse_and_normalize(path.read_bytes()).with_id(graph_id)

    def _find_node(self, node_id: str):
        for graph_id in self._graph_ids():
            graph = self.load_graph(graph_id)
            if graph.has_node(node_id):
                return graph, graph.node(node_id)
        return None, None

    def audit_evidence_for_claim(self, claim_id: str) -> ClaimEvidenceAudit:
        """Which evidence fragments support this persisted claim; empty
        evidence is only legal for assumption-backed claims."""
        from .model import EdgeKind, NodeKind

        graph, node = self._find_node(claim_id)
        if node is None or node.kind is not NodeKind.CLAIM:
            raise AuditError("UnknownClaim", f"no persisted claim {claim_id}")
        hashes = []
        for edge in graph.incoming(claim_id, EdgeKind.SUPPORTS):
            hashes.append(graph.node(edge.src).evidence_hash)
        assumptions = [e.src for e in graph.incoming(claim_id, EdgeKind.UNDERPINS)]
        # Cross-check: persisted support must be covered by a `used`
        # relation of one of the graph's producing activities.
        used: set[str] = set()
        for activity in self.ledger.activities():
            if activity.kind in ("draft", "repair") and activity.attr("case_id") == graph.meta.case_id:
                used |= self.ledger.used_entities(activity.id)
        for item_hash in hashes:
            if evidence_entity_id(item_hash) not in used:
                raise AuditError(
                    "ProvenanceMismatch",
                    f"evidence {item_hash[:12]} backing {claim_id} was never recorded as used",
                )
        return ClaimEvidenceAudit(
            claim_id=claim_id,
            graph_id=graph.id,
            evidence=tuple(sorted(hashes)),
            assumptions=tuple(sorted(assumptions)),
        )

    def audit_generation_context(self, node_id: str) -> dict:
        """The model/prompt/retrieval triple behind an AI-generated node."""
        graph, node = self._find_node(node_id)
        if node is None:
            raise AuditError("UnknownNode", f"no persisted node {node_id}")
        if node.generator != "ai":
            raise AuditError("NotAiGenerated", f"node {node_id} was not AI-generated")
        activity = self.ledger.find_activity(node.generation_ref or "")
        if activity is None:
            raise AuditError("UnknownNode", f"generation activity missing for {node_id}")
        return {
            "node_id": node_id,
            "graph_id": graph.id,
            "model_id": activity.attr("model_id"),
            "model_version": activity.attr("model_version"),
            "prompt_template_id": activity.attr("prompt_template_id"),
            "prompt_template_version": activity.attr("prompt_template_version"),
            "retrieval_set_id": activity.attr("retrieval_set_id"),
        }

    def audit_approvals(self, graph_id: str) -> list[dict]:
        """Approve/edit/override activities by human agents for a graph,
        in ledger order."""
        if not (self.graphs_dir / graph_id / "ag.json").exists():
            raise AuditError("UnknownGraph", f"no persisted graph {graph_id}")
        out = []
        for activity in self.ledger.activities():
            if activity.kind not in ("approve", "edit", "override"):
                continue
            if activity.attr("graph_id") != graph_id:
                continue
            agent = self.ledger.find_agent(activity.agent)
            if agent is None or agent.kind != "human":
                continue
            out.append(
                {
                    "agent": activity.agent,
                    "action": activity.kind,
                    "timestamp": activity.ended,
                    "detail": dict(activity.attributes),
                }
            )
        return out
