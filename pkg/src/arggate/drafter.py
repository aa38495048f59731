"""Argument drafting: the bounded authoring contract.

Drafting is a stateless request/response contract.  The reference
drafter is deterministic: it instantiates the policy's coverage
templates recursively, attaches every retrieved item whose tokens
overlap a leaf claim's class label, and falls back to an explicit
pending assumption for leaves with no matching evidence.  A fault
specification can mutate the output to simulate the failure modes of a
real generative model; each fault maps to exactly one constraint
violation downstream.

An external generation endpoint can take the reference drafter's place;
its responses are never trusted and flow through the same parser and
validation kernel as any other draft.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping

import requests

from .canonical import canonical_dumps, sha256_hex
from .kernel import (
    HINT_ADD_EVIDENCE,
    HINT_ADD_SUBCLAIM,
    HINT_ATTACH_GENERATION_REF,
    ViolationReport,
    hint_code,
)
from .policy import CoverageTemplate, PolicySet
from .text import token_set

SCHEMA_VERSION = "ag-v1"

PROMPT_TEMPLATE_ID = "draft-argument"
PROMPT_TEMPLATE_VERSION = "1"


def prompt_template_text() -> str:
    return (
        resources.files("arggate.templates")
        .joinpath("draft_argument.v1.txt")
        .read_text(encoding="utf-8")
    )


def prompt_template_hash() -> str:
    return sha256_hex(prompt_template_text().encode("utf-8"))


class DraftError(ValueError):
    pass


class NoMatchingTemplate(DraftError):
    pass


class FaultsNotAllowed(DraftError):
    pass


class EndpointUnreachable(RuntimeError):
    pass


class MalformedResponse(RuntimeError):
    pass


# Fault modes and the constraint each one trips.
FAULT_DROP_EVIDENCE_LINK = "DROP_EVIDENCE_LINK"          # -> C1
FAULT_OMIT_REQUIRED_SUBCLAIM = "OMIT_REQUIRED_SUBCLAIM"  # -> C3 (takes a class param)
FAULT_FABRICATE_EVIDENCE_ID = "FABRICATE_EVIDENCE_ID"    # -> C2
FAULT_OMIT_GENERATION_REF = "OMIT_GENERATION_REF"        # -> C5
FAULT_INJECT_CONTRADICTION = "INJECT_CONTRADICTION"      # -> C4

FAULT_MODES = (
    FAULT_DROP_EVIDENCE_LINK,
    FAULT_OMIT_REQUIRED_SUBCLAIM,
    FAULT_FABRICATE_EVIDENCE_ID,
    FAULT_OMIT_GENERATION_REF,
    FAULT_INJECT_CONTRADICTION,
)

# Fault mode repaired by each self-repairable hint code.
_HINT_REPAIRS_FAULT = {
    HINT_ADD_EVIDENCE: FAULT_DROP_EVIDENCE_LINK,
    HINT_ADD_SUBCLAIM: FAULT_OMIT_REQUIRED_SUBCLAIM,
    HINT_ATTACH_GENERATION_REF: FAULT_OMIT_GENERATION_REF,
}


@dataclass(frozen=True)
class Fault:
    mode: str
    param: str | None = None

    @classmethod
    def parse(cls, spec: str) -> "Fault":
        mode, _, param = spec.partition(":")
        if mode not in FAULT_MODES:
            raise DraftError(f"unknown fault mode {mode!r}")
        if mode == FAULT_OMIT_REQUIRED_SUBCLAIM and not param:
            raise DraftError(f"{mode} requires a claim class parameter")
        return cls(mode=mode, param=param or None)

    def __str__(self) -> str:
        return f"{self.mode}:{self.param}" if self.param else self.mode


@dataclass(frozen=True)
class DrafterMeta:
    drafter_id: str
    model_id: str
    model_version: str
    prompt_template_id: str
    prompt_template_version: str


REFERENCE_META = DrafterMeta(
    drafter_id="reference-drafter",
    model_id="reference-drafter",
    model_version="1.0",
    prompt_template_id=PROMPT_TEMPLATE_ID,
    prompt_template_version=PROMPT_TEMPLATE_VERSION,
)


@dataclass(frozen=True)
class RetrievedItem:
    hash: str
    title: str
    excerpt: str
    score: int
    source_class: str = ""


@dataclass(frozen=True)
class DraftRequest:
    """Everything a drafter may see: the case summary, the retrieval set,
    the policy's coverage surface, and prior feedback on repair rounds."""

    case_id: str
    decision_class: str
    kg_hash: str
    retrieval_set_id: str
    items: tuple[RetrievedItem, ...]
    coverage: tuple[CoverageTemplate, ...]
    policy_id: str
    policy_version: str
    policy_fingerprint: str
    schema_version: str = SCHEMA_VERSION
    round: int = 1
    feedback: ViolationReport | None = None
    generation_ref: str = ""

    def __post_init__(self) -> None:
        if self.round < 1:
            raise DraftError("round must be >= 1")
        if (self.feedback is not None) != (self.round > 1):
            raise DraftError("feedback must be present exactly for repair rounds")


@dataclass(frozen=True)
class DraftDocumentOut:
    content: str
    drafter_id: str
    round: int


def request_from_policy(
    *,
    case_id: str,
    decision_class: str,
    kg_hash: str,
    retrieval,
    snapshot,
    policy: PolicySet,
    policy_fp: str,
    round: int = 1,
    feedback: ViolationReport | None = None,
    generation_ref: str = "",
) -> DraftRequest:
    items = []
    for item_hash, score in retrieval.items:
        stored = snapshot.lookup(item_hash)
        items.append(
            RetrievedItem(
                hash=item_hash,
                title=stored.title if stored else "",
                excerpt=stored.content if stored else "",
                score=score,
                source_class=stored.source_class if stored else "",
            )
        )
    return DraftRequest(
        case_id=case_id,
        decision_class=decision_class,
        kg_hash=kg_hash,
        retrieval_set_id=retrieval.id,
        items=tuple(items),
        coverage=policy.coverage,
        policy_id=policy.id,
        policy_version=policy.version,
        policy_fingerprint=policy_fp,
        round=round,
        feedback=feedback,
        generation_ref=generation_ref,
    )


class ReferenceDrafter:
    """Deterministic drafter: same request, same bytes."""

    def __init__(self, meta: DrafterMeta = REFERENCE_META, allow_faults: bool = True):
        self.meta = meta
        self.allow_faults = allow_faults

    def draft(self, req: DraftRequest, faults: tuple[Fault, ...] = ()) -> DraftDocumentOut:
        if faults and not self.allow_faults:
            raise FaultsNotAllowed("fault injection is disabled in release mode")
        doc = self._base_document(req)
        for fault in self._effective_faults(req, faults):
            doc = _apply_fault(doc, fault, req)
        return DraftDocumentOut(
            content=canonical_dumps(_canonical_doc(doc)),
            drafter_id=self.meta.drafter_id,
            round=req.round,
        )

    def repair(self, req: DraftRequest, faults: tuple[Fault, ...] = ()) -> DraftDocumentOut:
        if req.feedback is None:
            raise DraftError("repair requires feedback from a failed validation")
        return self.draft(req, faults)

    def _effective_faults(
        self, req: DraftRequest, faults: tuple[Fault, ...]
    ) -> tuple[Fault, ...]:
        """On repair rounds, drop the faults whose violations the feedback
        asked us to fix; the rest (non-repairable modes) persist."""
        if req.feedback is None:
            return faults
        repaired = {
            _HINT_REPAIRS_FAULT[hint_code(v.repair_hint)]
            for v in req.feedback.violations
            if hint_code(v.repair_hint) in _HINT_REPAIRS_FAULT
        }
        return tuple(f for f in faults if f.mode not in repaired)

    def _base_document(self, req: DraftRequest) -> dict:
        templates = {t.top_claim_class: t for t in req.coverage}
        if req.decision_class not in templates:
            raise NoMatchingTemplate(
                f"no coverage template for decision class '{req.decision_class}'"
            )
        gen_ref = req.generation_ref or f"act-draft-{req.case_id}-r{req.round}"
        nodes: list[dict] = []
        edges: list[dict] = []
        used_hashes: set[str] = set()
        uncovered: list[str] = []

        def claim_id(cls: str) -> str:
            return f"c-{req.case_id}-{cls}"

        def make_claim(cls: str, text: str) -> dict:
            return {
                "id": claim_id(cls),
                "kind": "Claim",
                "text": text,
                "claim_class": cls,
                "polarity": "affirms",
                "subject": f"{req.case_id}:{cls}",
                "generator": "ai",
                "generation_ref": gen_ref,
            }

        def attach_evidence(cls: str) -> None:
            # Every retrieved item whose tokens overlap the class label
            # supports the claim; no overlap means the leaf goes uncovered.
            label_tokens = token_set(cls)
            matched = [
                item
                for item in sorted(req.items, key=lambda i: (-i.score, i.hash))
                if label_tokens & token_set(item.excerpt)
            ]
            if not matched:
                uncovered.append(cls)
                return
            for item in matched:
                ev_id = f"e-{req.case_id}-{item.hash[:12]}"
                if item.hash not in used_hashes:
                    used_hashes.add(item.hash)
                    nodes.append(
                        {
                            "id": ev_id,
                            "kind": "Evidence",
                            "text": item.title or f"excerpt {item.hash[:12]}",
                            "source_class": item.source_class,
                            "evidence_hash": item.hash,
                            "generator": "ai",
                            "generation_ref": gen_ref,
                        }
                    )
                edges.append(
                    {
                        "id": f"s-{ev_id}--{claim_id(cls)}",
                        "kind": "SUPPORTS",
                        "src": ev_id,
                        "dst": claim_id(cls),
                    }
                )

        def instantiate(cls: str, text: str, parent_cls: str | None) -> None:
            nodes.append(make_claim(cls, text))
            if parent_cls is not None:
                edges.append(
                    {
                        "id": f"d-{claim_id(cls)}--{claim_id(parent_cls)}",
                        "kind": "DECOMPOSES",
                        "src": claim_id(cls),
                        "dst": claim_id(parent_cls),
                    }
                )
            template = templates.get(cls)
            if template is not None:
                for child in template.required_child_classes:
                    instantiate(child, _class_text(child), cls)
            else:
                attach_evidence(cls)

        instantiate(
            req.decision_class,
            f"Complies with policy {req.policy_id}",
            None,
        )
        if uncovered:
            assumption_id = f"a-{req.case_id}-evidence-set-complete"
            nodes.append(
                {
                    "id": assumption_id,
                    "kind": "Assumption",
                    "text": "Evidence set complete for the remaining steps",
                    "approval": {"state": "pending"},
                    "generator": "ai",
                    "generation_ref": gen_ref,
                }
            )
            for cls in uncovered:
                edges.append(
                    {
                        "id": f"u-{assumption_id}--{claim_id(cls)}",
                        "kind": "UNDERPINS",
                        "src": assumption_id,
                        "dst": claim_id(cls),
                    }
                )
        return {
            "meta": {
                "case_id": req.case_id,
                "policy_id": req.policy_id,
                "policy_version": req.policy_version,
                "round": req.round,
            },
            "nodes": nodes,
            "edges": edges,
        }


def _class_text(cls: str) -> str:
    return cls.replace("_", " ").capitalize()


def _canonical_doc(doc: dict) -> dict:
    return {
        "meta": doc["meta"],
        "nodes": sorted(doc["nodes"], key=lambda n: n["id"]),
        "edges": sorted(doc["edges"], key=lambda e: e["id"]),
    }


# ---------------------------------------------------------------------------
# Fault application (test instrumentation for the failure modes a real
# generator exhibits: unsupported claims, skipped procedural steps,
# fabricated citations, missing provenance, silent conflicts).
# ---------------------------------------------------------------------------


def _claims(doc: dict) -> list[dict]:
    return sorted(
        (n for n in doc["nodes"] if n["kind"] == "Claim"), key=lambda n: n["id"]
    )


def _edges_to(doc: dict, node_id: str, kind: str) -> list[dict]:
    return [e for e in doc["edges"] if e["dst"] == node_id and e["kind"] == kind]


def _remove_node_if_orphaned(doc: dict, node_id: str) -> None:
    if any(node_id in (e["src"], e["dst"]) for e in doc["edges"]):
        return
    doc["nodes"] = [n for n in doc["nodes"] if n["id"] != node_id]


def _apply_fault(doc: dict, fault: Fault, req: DraftRequest) -> dict:
    if fault.mode == FAULT_DROP_EVIDENCE_LINK:
        for claim in _claims(doc):
            supports = _edges_to(doc, claim["id"], "SUPPORTS")
            underpins = _edges_to(doc, claim["id"], "UNDERPINS")
            if len(supports) == 1 and not underpins:
                edge = supports[0]
                doc["edges"] = [e for e in doc["edges"] if e["id"] != edge["id"]]
                _remove_node_if_orphaned(doc, edge["src"])
                break
    elif fault.mode == FAULT_OMIT_REQUIRED_SUBCLAIM:
        victim = next(
            (c for c in _claims(doc) if c.get("claim_class") == fault.param), None
        )
        if victim is not None:
            drop_edges = [
                e for e in doc["edges"] if victim["id"] in (e["src"], e["dst"])
            ]
            doc["edges"] = [e for e in doc["edges"] if e not in drop_edges]
            doc["nodes"] = [n for n in doc["nodes"] if n["id"] != victim["id"]]
            for edge in drop_edges:
                other = edge["src"] if edge["dst"] == victim["id"] else edge["dst"]
                _remove_node_if_orphaned(doc, other)
    elif fault.mode == FAULT_FABRICATE_EVIDENCE_ID:
        evidence = sorted(
            (n for n in doc["nodes"] if n["kind"] == "Evidence"), key=lambda n: n["id"]
        )
        if evidence:
            node = evidence[0]
            node["evidence_hash"] = sha256_hex(f"fabricated:{node['id']}".encode())
    elif fault.mode == FAULT_OMIT_GENERATION_REF:
        for node in sorted(doc["nodes"], key=lambda n: n["id"]):
            if node.get("generator") == "ai" and node.get("generation_ref"):
                node.pop("generation_ref")
                break
    elif fault.mode == FAULT_INJECT_CONTRADICTION:
        for claim in _claims(doc):
            supports = _edges_to(doc, claim["id"], "SUPPORTS")
            parents = [
                e for e in doc["edges"]
                if e["src"] == claim["id"] and e["kind"] == "DECOMPOSES"
            ]
            if supports and parents and claim.get("subject"):
                twin_id = f"x-{claim['id']}-negation"
                twin = dict(claim)
                twin.update(
                    {
                        "id": twin_id,
                        "polarity": "negates",
                        "text": f"NOT: {claim['text']}",
                    }
                )
                doc["nodes"].append(twin)
                doc["edges"].append(
                    {
                        "id": f"s-{supports[0]['src']}--{twin_id}",
                        "kind": "SUPPORTS",
                        "src": supports[0]["src"],
                        "dst": twin_id,
                    }
                )
                doc["edges"].append(
                    {
                        "id": f"d-{twin_id}--{parents[0]['dst']}",
                        "kind": "DECOMPOSES",
                        "src": twin_id,
                        "dst": parents[0]["dst"],
                    }
                )
                break
    return doc


# ---------------------------------------------------------------------------
# External generation endpoint adapter
# ---------------------------------------------------------------------------


def build_endpoint_request(req: DraftRequest) -> dict:
    body: dict[str, Any] = {
        "kg_summary": {
            "case_id": req.case_id,
            "decision_class": req.decision_class,
            "kg_hash": req.kg_hash,
        },
        "retrieval_items": [
            {"hash": i.hash, "title": i.title, "excerpt": i.excerpt} for i in req.items
        ],
        "coverage_classes": sorted(
            {c for t in req.coverage for c in (t.top_claim_class, *t.required_child_classes)}
        ),
        "schema_version": req.schema_version,
        "generation_ref": req.generation_ref or f"act-draft-{req.case_id}-r{req.round}",
    }
    if req.feedback is not None:
        body["feedback"] = req.feedback.to_obj()
    return body


class EndpointDrafter:
    """Adapter for an external generation endpoint speaking the canonical
    document protocol over HTTP POST."""

    def __init__(self, url: str, meta: DrafterMeta, timeout: float = 30.0):
        self.url = url
        self.meta = meta
        self.timeout = timeout

    def draft(self, req: DraftRequest, faults: tuple[Fault, ...] = ()) -> DraftDocumentOut:
        if faults:
            raise FaultsNotAllowed("fault injection applies to the reference drafter only")
        try:
            response = requests.post(
                self.url, json=build_endpoint_request(req), timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise EndpointUnreachable(f"generation endpoint unreachable: {exc}")
        if response.status_code != 200:
            raise MalformedResponse(
                f"generation endpoint returned HTTP {response.status_code}"
            )
        try:
            body = json.loads(response.text)
        except json.JSONDecodeError:
            raise MalformedResponse("generation endpoint did not return a JSON document")
        if not isinstance(body, Mapping) or "nodes" not in body:
            raise MalformedResponse("generation endpoint response is not an argument document")
        return DraftDocumentOut(
            content=canonical_dumps(body),
            drafter_id=self.meta.drafter_id,
            round=req.round,
        )

    def repair(self, req: DraftRequest, faults: tuple[Fault, ...] = ()) -> DraftDocumentOut:
        if req.feedback is None:
            raise DraftError("repair requires feedback from a failed validation")
        return self.draft(req, faults)
