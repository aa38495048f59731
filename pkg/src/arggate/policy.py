"""Policy sets: the constraint configuration the kernel validates against.

A policy set names the admissible evidence source classes, the coverage
templates that prescribe required subclaim classes, the consistency
rules used for contradiction detection, and the knobs for assumptions,
retrieval depth and the repair loop.  Policies are immutable values;
any change yields a new fingerprint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from .canonical import canonical_bytes, sha256_hex

ASSUMPTION_POLICIES = ("block_pending", "allow_pending")

CONSISTENCY_MUTEX = "mutex"
CONSISTENCY_POLARITY = "polarity"


class PolicyError(ValueError):
    def __init__(self, code: str, message: str, element: str | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.element = element


POLICY_INVALID_DOCUMENT = "InvalidDocument"
POLICY_DUPLICATE_SOURCE_CLASS = "DuplicateSourceClass"
POLICY_EMPTY_COVERAGE_TEMPLATE = "EmptyCoverageTemplate"
POLICY_REFLEXIVE_MUTEX = "ReflexiveMutex"
POLICY_BAD_VERSION = "BadVersion"


@dataclass(frozen=True)
class SourceClass:
    id: str
    description: str = ""
    scope: tuple[str, ...] = ()  # allowed corpus ids; empty = unrestricted

    def to_obj(self) -> dict:
        return {"id": self.id, "description": self.description, "scope": list(self.scope)}


@dataclass(frozen=True)
class CoverageTemplate:
    top_claim_class: str
    required_child_classes: tuple[str, ...]

    def to_obj(self) -> dict:
        return {
            "top_claim_class": self.top_claim_class,
            "required_child_classes": list(self.required_child_classes),
        }


@dataclass(frozen=True)
class ConsistencyRule:
    kind: str  # mutex | polarity
    classes: tuple[str, ...] = ()  # mutex only: the two incompatible claim classes

    def to_obj(self) -> dict:
        obj: dict[str, Any] = {"kind": self.kind}
        if self.kind == CONSISTENCY_MUTEX:
            obj["classes"] = list(self.classes)
        return obj


@dataclass(frozen=True)
class PolicySet:
    id: str
    version: str
    source_classes: tuple[SourceClass, ...] = ()
    coverage: tuple[CoverageTemplate, ...] = ()
    consistency: tuple[ConsistencyRule, ...] = ()
    assumption_policy: str = "block_pending"
    retrieval_k: int = 5
    max_repair_rounds: int = 3

    def source_class(self, class_id: str) -> SourceClass | None:
        for sc in self.source_classes:
            if sc.id == class_id:
                return sc
        return None

    def templates_for(self, claim_class: str) -> list[CoverageTemplate]:
        return [t for t in self.coverage if t.top_claim_class == claim_class]

    def has_polarity_rule(self) -> bool:
        return any(r.kind == CONSISTENCY_POLARITY for r in self.consistency)

    def mutex_pairs(self) -> set[frozenset[str]]:
        return {
            frozenset(r.classes)
            for r in self.consistency
            if r.kind == CONSISTENCY_MUTEX
        }

    def to_obj(self) -> dict:
        return {
            "id": self.id,
            "version": self.version,
            "source_classes": [sc.to_obj() for sc in self.source_classes],
            "coverage": [t.to_obj() for t in self.coverage],
            "consistency": [r.to_obj() for r in self.consistency],
            "assumption_policy": self.assumption_policy,
            "retrieval_k": self.retrieval_k,
            "max_repair_rounds": self.max_repair_rounds,
        }


def serialize_policy(policy: PolicySet) -> bytes:
    return canonical_bytes(policy.to_obj())


def policy_fingerprint(policy: PolicySet) -> str:
    """SHA-256 over the canonical policy document; stable across field
    reordering in the source file."""
    return sha256_hex(serialize_policy(policy))


def _require(cond: bool, code: str, message: str, element: str | None = None) -> None:
    if not cond:
        raise PolicyError(code, message, element)


def load_policy(source: Any) -> PolicySet:
    """Parse and validate a policy document; raises the first PolicyError
    in canonical order."""
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PolicyError(POLICY_INVALID_DOCUMENT, f"not valid UTF-8: {exc}")
    if isinstance(source, str):
        try:
            source = json.loads(source)
        except json.JSONDecodeError as exc:
            raise PolicyError(POLICY_INVALID_DOCUMENT, f"not valid JSON: {exc.msg}")
    if not isinstance(source, Mapping):
        raise PolicyError(POLICY_INVALID_DOCUMENT, "policy root must be an object")

    policy_id = source.get("id")
    _require(isinstance(policy_id, str) and bool(policy_id),
             POLICY_INVALID_DOCUMENT, "policy id must be a non-empty string")
    version = source.get("version")
    _require(
        isinstance(version, str) and version.isdigit(),
        POLICY_BAD_VERSION,
        "version must be a non-empty numeric string",
    )

    raw_classes = source.get("source_classes", [])
    _require(isinstance(raw_classes, list), POLICY_INVALID_DOCUMENT,
             "'source_classes' must be an array")
    classes: list[SourceClass] = []
    seen_ids: set[str] = set()
    for raw in sorted(raw_classes, key=lambda o: o.get("id", "") if isinstance(o, Mapping) else ""):
        _require(isinstance(raw, Mapping), POLICY_INVALID_DOCUMENT,
                 "source class entries must be objects")
        cid = raw.get("id")
        _require(isinstance(cid, str) and bool(cid), POLICY_INVALID_DOCUMENT,
                 "source class id must be a non-empty string")
        _require(cid not in seen_ids, POLICY_DUPLICATE_SOURCE_CLASS,
                 "duplicate source class id", cid)
        seen_ids.add(cid)
        scope = raw.get("scope", [])
        _require(
            isinstance(scope, list) and all(isinstance(s, str) and s for s in scope),
            POLICY_INVALID_DOCUMENT, "scope must be an array of corpus ids", cid,
        )
        classes.append(SourceClass(id=cid, description=str(raw.get("description", "")),
                                   scope=tuple(sorted(scope))))

    raw_coverage = source.get("coverage", [])
    _require(isinstance(raw_coverage, list), POLICY_INVALID_DOCUMENT,
             "'coverage' must be an array")
    coverage: list[CoverageTemplate] = []
    for raw in sorted(
        raw_coverage,
        key=lambda o: o.get("top_claim_class", "") if isinstance(o, Mapping) else "",
    ):
        _require(isinstance(raw, Mapping), POLICY_INVALID_DOCUMENT,
                 "coverage entries must be objects")
        top = raw.get("top_claim_class")
        _require(isinstance(top, str) and bool(top), POLICY_INVALID_DOCUMENT,
                 "coverage template requires top_claim_class")
        required = raw.get("required_child_classes")
        _require(
            isinstance(required, list) and len(required) > 0,
            POLICY_EMPTY_COVERAGE_TEMPLATE,
            "coverage template requires a non-empty class set", top,
        )
        _require(
            all(isinstance(c, str) and c for c in required),
            POLICY_INVALID_DOCUMENT, "required child classes must be strings", top,
        )
        _require(len(set(required)) == len(required), POLICY_INVALID_DOCUMENT,
                 "required child classes must be distinct", top)
        coverage.append(CoverageTemplate(top_claim_class=top,
                                         required_child_classes=tuple(sorted(required))))

    raw_rules = source.get("consistency", [])
    _require(isinstance(raw_rules, list), POLICY_INVALID_DOCUMENT,
             "'consistency' must be an array")
    rules: list[ConsistencyRule] = []
    for raw in raw_rules:
        _require(isinstance(raw, Mapping), POLICY_INVALID_DOCUMENT,
                 "consistency entries must be objects")
        kind = raw.get("kind")
        if kind == CONSISTENCY_POLARITY:
            rules.append(ConsistencyRule(kind=CONSISTENCY_POLARITY))
        elif kind == CONSISTENCY_MUTEX:
            pair = raw.get("classes")
            _require(
                isinstance(pair, list) and len(pair) == 2
                and all(isinstance(c, str) and c for c in pair),
                POLICY_INVALID_DOCUMENT, "mutex rule requires exactly two classes",
            )
            _require(pair[0] != pair[1], POLICY_REFLEXIVE_MUTEX,
                     "mutex pair must name two distinct classes", pair[0])
            rules.append(ConsistencyRule(kind=CONSISTENCY_MUTEX, classes=tuple(sorted(pair))))
        else:
            raise PolicyError(POLICY_INVALID_DOCUMENT,
                              f"unknown consistency rule kind {kind!r}")
    # De-duplicate and order rules for a stable fingerprint.
    rules = sorted(set(rules), key=lambda r: (r.kind, r.classes))

    assumption_policy = source.get("assumption_policy", "block_pending")
    _require(assumption_policy in ASSUMPTION_POLICIES, POLICY_INVALID_DOCUMENT,
             f"assumption_policy must be one of {ASSUMPTION_POLICIES}")
    retrieval_k = source.get("retrieval_k", 5)
    _require(isinstance(retrieval_k, int) and retrieval_k >= 1,
             POLICY_INVALID_DOCUMENT, "retrieval_k must be a positive integer")
    max_rounds = source.get("max_repair_rounds", 3)
    _require(isinstance(max_rounds, int) and max_rounds >= 1,
             POLICY_INVALID_DOCUMENT, "max_repair_rounds must be a positive integer")

    known = {"id", "version", "source_classes", "coverage", "consistency",
             "assumption_policy", "retrieval_k", "max_repair_rounds"}
    unknown = set(source) - known
    _require(not unknown, POLICY_INVALID_DOCUMENT,
             f"unknown policy field '{sorted(unknown)[0] if unknown else ''}'")

    return PolicySet(
        id=policy_id,
        version=version,
        source_classes=tuple(classes),
        coverage=tuple(coverage),
        consistency=tuple(rules),
        assumption_policy=assumption_policy,
        retrieval_k=retrieval_k,
        max_repair_rounds=max_rounds,
    )
