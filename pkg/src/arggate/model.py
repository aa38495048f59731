"""Typed argument graphs.

An argument graph is a typed directed multigraph: claims, rules,
evidence excerpts, assumptions, inference strategies and uncertainty
qualifiers, joined by typed edges with fixed endpoint signatures.
This module owns the document format, the parser/normalizer (the only
way to obtain a graph from outside), canonical serialization, and the
GSN-style exports.

Refinement edges (DECOMPOSES, INFERRED_BY, PREMISE) all point from the
refining element toward the claim being refined: a subclaim DECOMPOSES
its parent, a subclaim is tied to a strategy via INFERRED_BY, and the
strategy PREMISEs the parent claim it argues for.  Top-level claims are
therefore exactly the claims with no outgoing DECOMPOSES or INFERRED_BY
edge, and the union of the three kinds must be acyclic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

from .canonical import canonical_bytes, sha256_hex


class NodeKind(str, Enum):
    CLAIM = "Claim"
    RULE = "Rule"
    EVIDENCE = "Evidence"
    ASSUMPTION = "Assumption"
    STRATEGY = "Strategy"
    UNCERTAINTY = "Uncertainty"


class EdgeKind(str, Enum):
    SUPPORTS = "SUPPORTS"
    UNDERPINS = "UNDERPINS"
    INFERRED_BY = "INFERRED_BY"
    PREMISE = "PREMISE"
    DECOMPOSES = "DECOMPOSES"
    GOVERNS = "GOVERNS"
    QUALIFIES = "QUALIFIES"
    ATTACKS = "ATTACKS"


# (src kind, dst kind) required by each edge kind.
EDGE_SIGNATURES: dict[EdgeKind, tuple[NodeKind, NodeKind]] = {
    EdgeKind.SUPPORTS: (NodeKind.EVIDENCE, NodeKind.CLAIM),
    EdgeKind.UNDERPINS: (NodeKind.ASSUMPTION, NodeKind.CLAIM),
    EdgeKind.INFERRED_BY: (NodeKind.CLAIM, NodeKind.STRATEGY),
    EdgeKind.PREMISE: (NodeKind.STRATEGY, NodeKind.CLAIM),
    EdgeKind.DECOMPOSES: (NodeKind.CLAIM, NodeKind.CLAIM),
    EdgeKind.GOVERNS: (NodeKind.RULE, NodeKind.CLAIM),
    EdgeKind.QUALIFIES: (NodeKind.UNCERTAINTY, NodeKind.CLAIM),
    EdgeKind.ATTACKS: (NodeKind.CLAIM, NodeKind.CLAIM),
}

REFINEMENT_KINDS = (EdgeKind.DECOMPOSES, EdgeKind.INFERRED_BY, EdgeKind.PREMISE)

GENERATORS = ("ai", "human", "system")
POLARITIES = ("affirms", "negates")
APPROVAL_STATES = ("none", "pending", "approved")

RESOLUTION_UNRESOLVED = "unresolved"
RESOLUTION_PREVAILING_PREFIX = "prevailing:"


class ParseError(ValueError):
    """Single, deterministic parse/normalization failure.

    `code` is one of the PARSE_* constants; `element` names the first
    offending node or edge id in canonical (lexicographic) order when
    one exists.
    """

    def __init__(self, code: str, message: str, element: str | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.element = element


PARSE_INVALID_DOCUMENT = "InvalidDocument"
PARSE_EMPTY_DOCUMENT = "EmptyDocument"
PARSE_UNKNOWN_KIND = "UnknownKind"
PARSE_DUPLICATE_ID = "DuplicateId"
PARSE_MISSING_CONDITIONAL_FIELD = "MissingConditionalField"
PARSE_UNEXPECTED_FIELD = "UnexpectedField"
PARSE_DANGLING_EDGE_ENDPOINT = "DanglingEdgeEndpoint"
PARSE_KIND_SIGNATURE_VIOLATION = "KindSignatureViolation"
PARSE_CYCLIC_REFINEMENT = "CyclicRefinement"
PARSE_UNREACHABLE_NODE = "UnreachableNode"


@dataclass(frozen=True)
class Approval:
    state: str = "pending"
    agent: str | None = None
    timestamp: str | None = None

    def to_obj(self) -> dict:
        obj: dict[str, Any] = {"state": self.state}
        if self.agent is not None:
            obj["agent"] = self.agent
        if self.timestamp is not None:
            obj["timestamp"] = self.timestamp
        return obj


@dataclass(frozen=True)
class Qualifier:
    label: str
    lower: float | None = None
    upper: float | None = None

    def to_obj(self) -> dict:
        obj: dict[str, Any] = {"label": self.label}
        if self.lower is not None:
            obj["lower"] = self.lower
        if self.upper is not None:
            obj["upper"] = self.upper
        return obj


@dataclass(frozen=True)
class ArgNode:
    id: str
    kind: NodeKind
    text: str
    generator: str = "human"
    generation_ref: str | None = None
    claim_class: str | None = None          # Claim only
    polarity: str | None = None             # Claim only, defaults to affirms
    subject: str | None = None              # Claim only
    approval: Approval | None = None        # Assumption only
    source_class: str | None = None         # Evidence only
    evidence_hash: str | None = None        # Evidence only
    qualifier: Qualifier | None = None      # Uncertainty only

    def to_obj(self) -> dict:
        obj: dict[str, Any] = {
            "id": self.id,
            "kind": self.kind.value,
            "text": self.text,
            "generator": self.generator,
        }
        if self.generation_ref is not None:
            obj["generation_ref"] = self.generation_ref
        if self.kind is NodeKind.CLAIM:
            obj["claim_class"] = self.claim_class
            obj["polarity"] = self.polarity
            if self.subject is not None:
                obj["subject"] = self.subject
        elif self.kind is NodeKind.ASSUMPTION:
            obj["approval"] = self.approval.to_obj() if self.approval else {"state": "pending"}
        elif self.kind is NodeKind.EVIDENCE:
            obj["source_class"] = self.source_class
            obj["evidence_hash"] = self.evidence_hash
        elif self.kind is NodeKind.UNCERTAINTY:
            obj["qualifier"] = self.qualifier.to_obj() if self.qualifier else None
        return obj


@dataclass(frozen=True)
class ArgEdge:
    id: str
    kind: EdgeKind
    src: str
    dst: str
    resolution: str | None = None  # ATTACKS only: "unresolved" | "prevailing:<node-id>"

    def to_obj(self) -> dict:
        obj: dict[str, Any] = {
            "id": self.id,
            "kind": self.kind.value,
            "src": self.src,
            "dst": self.dst,
        }
        if self.kind is EdgeKind.ATTACKS:
            obj["resolution"] = self.resolution or RESOLUTION_UNRESOLVED
        return obj


@dataclass(frozen=True)
class GraphMeta:
    case_id: str = ""
    policy_id: str = ""
    policy_version: str = ""
    round: int = 1

    def to_obj(self) -> dict:
        return {
            "case_id": self.case_id,
            "policy_id": self.policy_id,
            "policy_version": self.policy_version,
            "round": self.round,
        }


@dataclass(frozen=True)
class ArgumentGraph:
    """Immutable, normalized argument graph.

    `id` is only set once a graph has been accepted and persisted; it is
    then the hash of the canonical serialization.  Everything else is
    available on any parsed graph.
    """

    nodes: tuple[ArgNode, ...]
    edges: tuple[ArgEdge, ...]
    top_level: tuple[str, ...]
    meta: GraphMeta = GraphMeta()
    id: str | None = None
    _by_id: dict = field(default_factory=dict, compare=False, repr=False)
    _in: dict = field(default_factory=dict, compare=False, repr=False)
    _out: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        by_id = {n.id: n for n in self.nodes}
        incoming: dict[str, list[ArgEdge]] = {n.id: [] for n in self.nodes}
        outgoing: dict[str, list[ArgEdge]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            incoming[e.dst].append(e)
            outgoing[e.src].append(e)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_in", incoming)
        object.__setattr__(self, "_out", outgoing)

    def node(self, node_id: str) -> ArgNode:
        return self._by_id[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._by_id

    def nodes_of_kind(self, kind: NodeKind) -> list[ArgNode]:
        return [n for n in self.nodes if n.kind is kind]

    def incoming(self, node_id: str, kind: EdgeKind | None = None) -> list[ArgEdge]:
        edges = self._in.get(node_id, [])
        return [e for e in edges if kind is None or e.kind is kind]

    def outgoing(self, node_id: str, kind: EdgeKind | None = None) -> list[ArgEdge]:
        edges = self._out.get(node_id, [])
        return [e for e in edges if kind is None or e.kind is kind]

    def refinement_children(self, claim_id: str) -> list[str]:
        """Claims one refinement step below `claim_id` (direct subclaims,
        plus claims feeding a strategy that argues for it)."""
        children: list[str] = []
        for e in self.incoming(claim_id, EdgeKind.DECOMPOSES):
            children.append(e.src)
        for e in self.incoming(claim_id, EdgeKind.PREMISE):
            for inf in self.incoming(e.src, EdgeKind.INFERRED_BY):
                children.append(inf.src)
        return children

    def refinement_descendants(self, claim_id: str) -> list[str]:
        """All claims transitively below `claim_id` in the refinement
        structure, excluding the claim itself."""
        seen: set[str] = set()
        stack = [claim_id]
        while stack:
            current = stack.pop()
            for child in self.refinement_children(current):
                if child not in seen:
                    seen.add(child)
                    stack.append(child)
        return sorted(seen)

    def is_refined(self, claim_id: str) -> bool:
        return bool(
            self.incoming(claim_id, EdgeKind.DECOMPOSES)
            or self.incoming(claim_id, EdgeKind.PREMISE)
        )

    def structurally_equal(self, other: "ArgumentGraph") -> bool:
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.top_level == other.top_level
            and self.meta == other.meta
        )

    def with_id(self, graph_id: str) -> "ArgumentGraph":
        return replace(self, id=graph_id)

    def to_obj(self) -> dict:
        return {
            "meta": self.meta.to_obj(),
            "nodes": [n.to_obj() for n in self.nodes],
            "edges": [e.to_obj() for e in self.edges],
        }


@dataclass(frozen=True)
class DraftDocument:
    """Raw drafter output: document text plus drafter identity and round."""

    content: str
    drafter_id: str = ""
    round: int = 1


# ---------------------------------------------------------------------------
# Parsing and normalization
# ---------------------------------------------------------------------------

_NODE_COMMON_FIELDS = {"id", "kind", "text", "generator", "generation_ref"}
_NODE_CONDITIONAL_FIELDS: dict[NodeKind, dict[str, bool]] = {
    # field -> required?
    NodeKind.CLAIM: {"claim_class": True, "polarity": False, "subject": False},
    NodeKind.RULE: {},
    NodeKind.EVIDENCE: {"source_class": True, "evidence_hash": True},
    NodeKind.ASSUMPTION: {"approval": False},
    NodeKind.STRATEGY: {},
    NodeKind.UNCERTAINTY: {"qualifier": True},
}
_ALL_CONDITIONAL_FIELDS = {
    f for fields in _NODE_CONDITIONAL_FIELDS.values() for f in fields
}


def _decode_document(source: Any) -> Mapping:
    if isinstance(source, DraftDocument):
        source = source.content
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(PARSE_INVALID_DOCUMENT, f"not valid UTF-8: {exc}")
    if isinstance(source, str):
        try:
            source = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ParseError(PARSE_INVALID_DOCUMENT, f"not valid JSON: {exc.msg}")
    if not isinstance(source, Mapping):
        raise ParseError(PARSE_INVALID_DOCUMENT, "document root must be an object")
    return source


def _parse_meta(obj: Any) -> GraphMeta:
    if obj is None:
        return GraphMeta()
    if not isinstance(obj, Mapping):
        raise ParseError(PARSE_INVALID_DOCUMENT, "meta must be an object")
    round_no = obj.get("round", 1)
    if not isinstance(round_no, int) or round_no < 1:
        raise ParseError(PARSE_INVALID_DOCUMENT, "meta.round must be a positive integer")
    return GraphMeta(
        case_id=str(obj.get("case_id", "")),
        policy_id=str(obj.get("policy_id", "")),
        policy_version=str(obj.get("policy_version", "")),
        round=round_no,
    )


def _require_str(obj: Mapping, key: str, element: str | None) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise ParseError(
            PARSE_INVALID_DOCUMENT, f"field '{key}' must be a non-empty string", element
        )
    return value


def _parse_approval(raw: Any, element: str) -> Approval:
    if raw is None:
        return Approval(state="pending")
    if isinstance(raw, str):
        raw = {"state": raw}
    if not isinstance(raw, Mapping) or raw.get("state") not in APPROVAL_STATES:
        raise ParseError(
            PARSE_INVALID_DOCUMENT,
            "approval must be one of none|pending|approved",
            element,
        )
    state = raw["state"]
    if state == "approved":
        agent = raw.get("agent")
        stamp = raw.get("timestamp")
        if not isinstance(agent, str) or not agent or not isinstance(stamp, str) or not stamp:
            raise ParseError(
                PARSE_MISSING_CONDITIONAL_FIELD,
                "approved approval requires agent and timestamp",
                element,
            )
        return Approval(state="approved", agent=agent, timestamp=stamp)
    return Approval(state=state)


def _parse_qualifier(raw: Any, element: str) -> Qualifier:
    if not isinstance(raw, Mapping) or not isinstance(raw.get("label"), str) or not raw["label"]:
        raise ParseError(
            PARSE_INVALID_DOCUMENT, "qualifier must carry a non-empty label", element
        )
    bounds: dict[str, float | None] = {}
    for key in ("lower", "upper"):
        value = raw.get(key)
        if value is not None:
            if not isinstance(value, (int, float)) or not 0.0 <= float(value) <= 1.0:
                raise ParseError(
                    PARSE_INVALID_DOCUMENT, f"qualifier.{key} must lie in [0,1]", element
                )
            value = float(value)
        bounds[key] = value
    return Qualifier(label=raw["label"], lower=bounds["lower"], upper=bounds["upper"])


def _parse_node(obj: Any) -> ArgNode:
    if not isinstance(obj, Mapping):
        raise ParseError(PARSE_INVALID_DOCUMENT, "node entries must be objects")
    node_id = _require_str(obj, "id", None)
    kind_raw = obj.get("kind")
    try:
        kind = NodeKind(kind_raw)
    except ValueError:
        raise ParseError(PARSE_UNKNOWN_KIND, f"unknown node kind {kind_raw!r}", node_id)
    text = obj.get("text", "")
    if not isinstance(text, str):
        raise ParseError(PARSE_INVALID_DOCUMENT, "text must be a string", node_id)

    generator = obj.get("generator", "human")
    if generator not in GENERATORS:
        raise ParseError(
            PARSE_INVALID_DOCUMENT, f"generator must be one of {GENERATORS}", node_id
        )
    generation_ref = obj.get("generation_ref")
    if generation_ref is not None and (not isinstance(generation_ref, str) or not generation_ref):
        raise ParseError(PARSE_INVALID_DOCUMENT, "generation_ref must be a non-empty string", node_id)

    allowed = _NODE_CONDITIONAL_FIELDS[kind]
    extra = set(obj) - _NODE_COMMON_FIELDS - set(allowed)
    if extra:
        offender = sorted(extra)[0]
        code = (
            PARSE_UNEXPECTED_FIELD
            if offender in _ALL_CONDITIONAL_FIELDS
            else PARSE_INVALID_DOCUMENT
        )
        raise ParseError(code, f"field '{offender}' not allowed on {kind.value} node", node_id)
    for fname, required in allowed.items():
        if required and obj.get(fname) is None:
            raise ParseError(
                PARSE_MISSING_CONDITIONAL_FIELD,
                f"{kind.value} node requires field '{fname}'",
                node_id,
            )

    claim_class = polarity = subject = source_class = evidence_hash = None
    approval = qualifier = None
    if kind is NodeKind.CLAIM:
        claim_class = _require_str(obj, "claim_class", node_id)
        polarity = obj.get("polarity", "affirms")
        if polarity not in POLARITIES:
            raise ParseError(
                PARSE_INVALID_DOCUMENT, f"polarity must be one of {POLARITIES}", node_id
            )
        subject = obj.get("subject")
        if subject is not None and (not isinstance(subject, str) or not subject):
            raise ParseError(PARSE_INVALID_DOCUMENT, "subject must be a non-empty string", node_id)
    elif kind is NodeKind.EVIDENCE:
        source_class = _require_str(obj, "source_class", node_id)
        evidence_hash = _require_str(obj, "evidence_hash", node_id)
    elif kind is NodeKind.ASSUMPTION:
        approval = _parse_approval(obj.get("approval"), node_id)
    elif kind is NodeKind.UNCERTAINTY:
        qualifier = _parse_qualifier(obj.get("qualifier"), node_id)

    return ArgNode(
        id=node_id,
        kind=kind,
        text=text,
        generator=generator,
        generation_ref=generation_ref,
        claim_class=claim_class,
        polarity=polarity,
        subject=subject,
        approval=approval,
        source_class=source_class,
        evidence_hash=evidence_hash,
        qualifier=qualifier,
    )


def _parse_edge(obj: Any, nodes_by_id: Mapping[str, ArgNode]) -> ArgEdge:
    if not isinstance(obj, Mapping):
        raise ParseError(PARSE_INVALID_DOCUMENT, "edge entries must be objects")
    edge_id = _require_str(obj, "id", None)
    kind_raw = obj.get("kind")
    try:
        kind = EdgeKind(kind_raw)
    except ValueError:
        raise ParseError(PARSE_UNKNOWN_KIND, f"unknown edge kind {kind_raw!r}", edge_id)
    src = _require_str(obj, "src", edge_id)
    dst = _require_str(obj, "dst", edge_id)
    for endpoint in (src, dst):
        if endpoint not in nodes_by_id:
            raise ParseError(
                PARSE_DANGLING_EDGE_ENDPOINT,
                f"edge endpoint '{endpoint}' is not a node",
                edge_id,
            )
    want_src, want_dst = EDGE_SIGNATURES[kind]
    got = (nodes_by_id[src].kind, nodes_by_id[dst].kind)
    if got != (want_src, want_dst):
        raise ParseError(
            PARSE_KIND_SIGNATURE_VIOLATION,
            f"{kind.value} requires {want_src.value}->{want_dst.value}, "
            f"got {got[0].value}->{got[1].value}",
            edge_id,
        )

    extra = set(obj) - {"id", "kind", "src", "dst", "resolution"}
    if extra:
        raise ParseError(
            PARSE_INVALID_DOCUMENT, f"unknown edge field '{sorted(extra)[0]}'", edge_id
        )
    resolution = obj.get("resolution")
    if kind is EdgeKind.ATTACKS:
        if resolution is None:
            resolution = RESOLUTION_UNRESOLVED
        if not isinstance(resolution, str) or (
            resolution != RESOLUTION_UNRESOLVED
            and not resolution.startswith(RESOLUTION_PREVAILING_PREFIX)
        ):
            raise ParseError(
                PARSE_KIND_SIGNATURE_VIOLATION,
                "ATTACKS resolution must be 'unresolved' or 'prevailing:<node-id>'",
                edge_id,
            )
        if resolution.startswith(RESOLUTION_PREVAILING_PREFIX):
            winner = resolution[len(RESOLUTION_PREVAILING_PREFIX):]
            if winner not in nodes_by_id:
                raise ParseError(
                    PARSE_DANGLING_EDGE_ENDPOINT,
                    f"prevailing node '{winner}' is not a node",
                    edge_id,
                )
    elif resolution is not None:
        raise ParseError(
            PARSE_UNEXPECTED_FIELD,
            "resolution is only allowed on ATTACKS edges",
            edge_id,
        )
    return ArgEdge(id=edge_id, kind=kind, src=src, dst=dst,
                   resolution=resolution if kind is EdgeKind.ATTACKS else None)


def _check_refinement_acyclic(nodes: Iterable[ArgNode], edges: Iterable[ArgEdge]) -> None:
    adjacency: dict[str, list[str]] = {n.id: [] for n in nodes}
    indegree: dict[str, int] = {n.id: 0 for n in nodes}
    for e in edges:
        if e.kind in REFINEMENT_KINDS:
            adjacency[e.src].append(e.dst)
            indegree[e.dst] += 1
    queue = [nid for nid, deg in indegree.items() if deg == 0]
    visited = 0
    while queue:
        current = queue.pop()
        visited += 1
        for nxt in adjacency[current]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                queue.append(nxt)
    if visited != len(indegree):
        offender = min(nid for nid, deg in indegree.items() if deg > 0)
        raise ParseError(
            PARSE_CYCLIC_REFINEMENT,
            "refinement edges form a cycle",
            offender,
        )


def _check_connected(nodes: list[ArgNode], edges: list[ArgEdge], roots: list[str]) -> None:
    neighbours: dict[str, set[str]] = {n.id: set() for n in nodes}
    for e in edges:
        neighbours[e.src].add(e.dst)
        neighbours[e.dst].add(e.src)
    seen = set(roots)
    stack = list(roots)
    while stack:
        for nxt in neighbours[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    unreachable = [n.id for n in nodes if n.id not in seen]
    if unreachable:
        raise ParseError(
            PARSE_UNREACHABLE_NODE,
            "node not connected to any top-level claim",
            min(unreachable),
        )


def parse_and_normalize(source: Any) -> ArgumentGraph:
    """Parse a document into a normalized, well-formed argument graph.

    Any malformed input raises exactly one ParseError naming the first
    offending element in canonical (lexicographic id) order.  On
    success the graph has: nodes and edges sorted by id, duplicate
    (kind, src, dst) edges collapsed, and top_level inferred as the
    claims with no outgoing refinement edge.
    """
    data = _decode_document(source)
    unknown_keys = set(data) - {"nodes", "edges", "meta"}
    if unknown_keys:
        raise ParseError(
            PARSE_INVALID_DOCUMENT, f"unknown document field '{sorted(unknown_keys)[0]}'"
        )
    meta = _parse_meta(data.get("meta"))
    raw_nodes = data.get("nodes")
    raw_edges = data.get("edges", [])
    if raw_nodes is not None and not isinstance(raw_nodes, list):
        raise ParseError(PARSE_INVALID_DOCUMENT, "'nodes' must be an array")
    if not isinstance(raw_edges, list):
        raise ParseError(PARSE_INVALID_DOCUMENT, "'edges' must be an array")
    if not raw_nodes:
        raise ParseError(PARSE_EMPTY_DOCUMENT, "document contains no nodes")

    def sort_key(obj: Any) -> str:
        return obj.get("id", "") if isinstance(obj, Mapping) else ""

    nodes_by_id: dict[str, ArgNode] = {}
    for raw in sorted(raw_nodes, key=sort_key):
        node = _parse_node(raw)
        if node.id in nodes_by_id:
            raise ParseError(PARSE_DUPLICATE_ID, "duplicate node id", node.id)
        nodes_by_id[node.id] = node

    edges_by_id: dict[str, ArgEdge] = {}
    seen_triples: dict[tuple, str] = {}
    for raw in sorted(raw_edges, key=sort_key):
        edge = _parse_edge(raw, nodes_by_id)
        if edge.id in edges_by_id:
            raise ParseError(PARSE_DUPLICATE_ID, "duplicate edge id", edge.id)
        triple = (edge.kind, edge.src, edge.dst)
        if triple in seen_triples:
            continue  # duplicate parallel edge carries no information
        seen_triples[triple] = edge.id
        edges_by_id[edge.id] = edge

    nodes = tuple(nodes_by_id[nid] for nid in sorted(nodes_by_id))
    edges = tuple(edges_by_id[eid] for eid in sorted(edges_by_id))
    _check_refinement_acyclic(nodes, edges)

    outgoing_refinement: set[str] = set()
    for e in edges:
        if e.kind in (EdgeKind.DECOMPOSES, EdgeKind.INFERRED_BY):
            outgoing_refinement.add(e.src)
    top_level = tuple(
        sorted(
            n.id
            for n in nodes
            if n.kind is NodeKind.CLAIM and n.id not in outgoing_refinement
        )
    )
    _check_connected(list(nodes), list(edges), list(top_level))
    return ArgumentGraph(nodes=nodes, edges=edges, top_level=top_level, meta=meta)


def canonical_serialize(graph: ArgumentGraph) -> bytes:
    """Byte-deterministic document encoding; the graph id is the SHA-256
    of these bytes."""
    return canonical_bytes(graph.to_obj())


def graph_hash(graph: ArgumentGraph) -> str:
    return sha256_hex(canonical_serialize(graph))


# ---------------------------------------------------------------------------
# GSN-style exports
# ---------------------------------------------------------------------------

GSN_TYPES: dict[NodeKind, str] = {
    NodeKind.CLAIM: "Goal",
    NodeKind.STRATEGY: "Strategy",
    NodeKind.EVIDENCE: "Solution",
    NodeKind.ASSUMPTION: "Assumption",
    NodeKind.RULE: "Context",
    NodeKind.UNCERTAINTY: "Justification",
}

_DOT_SHAPES: dict[NodeKind, str] = {
    NodeKind.CLAIM: 'shape=box style=rounded',
    NodeKind.STRATEGY: 'shape=parallelogram',
    NodeKind.EVIDENCE: 'shape=box',
    NodeKind.ASSUMPTION: 'shape=box style=dashed',
    NodeKind.RULE: 'shape=box style=filled fillcolor=lightgrey',
    NodeKind.UNCERTAINTY: 'shape=note',
}


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def export_gsn(graph: ArgumentGraph, format: str = "gsn-json") -> bytes:
    """Render the graph for GSN-style consumption.

    `dot` mirrors the usual assurance-case conventions: claims as
    rounded boxes, evidence as plain boxes, assumptions dashed.
    `gsn-json` maps node kinds onto GSN element types.
    """
    if format == "dot":
        lines = ["digraph argument {", "  rankdir=TB;"]
        for n in graph.nodes:
            label = _dot_escape(f"{n.id}\n{n.text}" if n.text else n.id)
            lines.append(f'  "{n.id}" [label="{label}" {_DOT_SHAPES[n.kind]}];')
        for e in graph.edges:
            lines.append(f'  "{e.src}" -> "{e.dst}" [label="{e.kind.value}"];')
        lines.append("}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    if format == "gsn-json":
        obj = {
            "graph_id": graph.id,
            "top_level": list(graph.top_level),
            "nodes": [
                {
                    "id": n.id,
                    "gsn_type": GSN_TYPES[n.kind],
                    "kind": n.kind.value,
                    "text": n.text,
                }
                for n in graph.nodes
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "kind": e.kind.value} for e in graph.edges
            ],
        }
        return canonical_bytes(obj)
    raise ValueError(f"unknown GSN export format: {format!r}")
