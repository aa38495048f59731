"""The deterministic validation kernel.

Five independent checks gate what may enter the persisted record:

  C1  evidence completeness   every leaf claim is evidence-backed or
                              rests on an (approved, if the policy says
                              so) assumption; refined claims are backed
                              by their subclaims
  C2  evidence admissibility  every cited excerpt exists in the store,
                              hash-verified, under an authorized source
                              class and corpus scope
  C3  rule coverage           every claim whose class carries a coverage
                              template has all required subclaim classes
                              below it
  C4  local non-contradiction contradictory claim pairs must be joined
                              by an explicit, resolved attack edge
  C5  provenance completeness AI-generated nodes reference a generation
                              activity naming model, prompt template and
                              retrieval set; human-edited nodes have a
                              recorded edit activity

All checks are pure functions of the graph, the policy, a store
snapshot and the candidate provenance; identical inputs produce
identical results, and every failing constraint contributes at least
one violation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

from .canonical import canonical_bytes
from .ledger import GENERATION_ATTRS, ProvenanceDraft
from .model import (
    ArgumentGraph,
    EdgeKind,
    NodeKind,
    RESOLUTION_PREVAILING_PREFIX,
    graph_hash,
)
from .policy import PolicySet, policy_fingerprint


class ConstraintId(str, Enum):
    C1_EVIDENCE_COMPLETENESS = "C1_EVIDENCE_COMPLETENESS"
    C2_EVIDENCE_ADMISSIBILITY = "C2_EVIDENCE_ADMISSIBILITY"
    C3_RULE_COVERAGE = "C3_RULE_COVERAGE"
    C4_NON_CONTRADICTION = "C4_NON_CONTRADICTION"
    C5_PROVENANCE_COMPLETENESS = "C5_PROVENANCE_COMPLETENESS"


# Machine-readable repair hints. The first group is self-repairable by
# the reference drafter; everything else escalates to a human.
HINT_ADD_EVIDENCE = "ADD_EVIDENCE"
HINT_ADD_SUBCLAIM = "ADD_SUBCLAIM"  # rendered as ADD_SUBCLAIM:<class>
HINT_ATTACH_GENERATION_REF = "ATTACH_GENERATION_REF"
HINT_APPROVE_ASSUMPTION = "APPROVE_ASSUMPTION"
HINT_REPLACE_EVIDENCE = "REPLACE_EVIDENCE"
HINT_ADD_ATTACK_EDGE = "ADD_ATTACK_EDGE"
HINT_RESOLVE_ATTACK = "RESOLVE_ATTACK"
HINT_RECORD_EDIT_ACTIVITY = "RECORD_EDIT_ACTIVITY"

REPAIRABLE_HINTS = (HINT_ADD_EVIDENCE, HINT_ADD_SUBCLAIM, HINT_ATTACH_GENERATION_REF)


def hint_code(repair_hint: str) -> str:
    return repair_hint.split(":", 1)[0]


def is_repairable(repair_hint: str) -> bool:
    return hint_code(repair_hint) in REPAIRABLE_HINTS


class CalledOnValidGraph(RuntimeError):
    pass


@dataclass(frozen=True)
class Violation:
    constraint: ConstraintId
    node_ids: tuple[str, ...] = ()
    edge_ids: tuple[str, ...] = ()
    message: str = ""
    repair_hint: str = ""

    def to_obj(self) -> dict:
        return {
            "constraint": self.constraint.value,
            "node_ids": list(self.node_ids),
            "edge_ids": list(self.edge_ids),
            "message": self.message,
            "repair_hint": self.repair_hint,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Violation":
        return cls(
            constraint=ConstraintId(obj["constraint"]),
            node_ids=tuple(obj.get("node_ids", ())),
            edge_ids=tuple(obj.get("edge_ids", ())),
            message=obj.get("message", ""),
            repair_hint=obj.get("repair_hint", ""),
        )


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    violations: tuple[Violation, ...]
    graph_hash: str
    policy_fingerprint: str

    def to_obj(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [v.to_obj() for v in self.violations],
            "graph_hash": self.graph_hash,
            "policy_fingerprint": self.policy_fingerprint,
        }


@dataclass(frozen=True)
class ViolationReport:
    """The structured feedback value driving the repair loop and the
    oversight surfaces."""

    valid: bool
    violations: tuple[Violation, ...]
    graph_hash: str
    policy_fingerprint: str

    def to_obj(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [v.to_obj() for v in self.violations],
            "graph_hash": self.graph_hash,
            "policy_fingerprint": self.policy_fingerprint,
        }

    def to_bytes(self) -> bytes:
        return canonical_bytes(self.to_obj())

    @classmethod
    def from_obj(cls, obj: dict) -> "ViolationReport":
        return cls(
            valid=bool(obj["valid"]),
            violations=tuple(Violation.from_obj(v) for v in obj.get("violations", ())),
            graph_hash=obj.get("graph_hash", ""),
            policy_fingerprint=obj.get("policy_fingerprint", ""),
        )

    def repairable(self) -> list[Violation]:
        return [v for v in self.violations if is_repairable(v.repair_hint)]


# ---------------------------------------------------------------------------
# The five checks
# ---------------------------------------------------------------------------


def check_evidence_completeness(g: ArgumentGraph, p: PolicySet) -> list[Violation]:
    """C1: a leaf claim must carry evidence or rest on an assumption;
    under block_pending the assumption must be approved."""
    violations: list[Violation] = []
    for node in g.nodes:
        if node.kind is not NodeKind.CLAIM:
            continue
        if g.incoming(node.id, EdgeKind.SUPPORTS):
            continue
        if g.is_refined(node.id):
            continue
        assumption_edges = g.incoming(node.id, EdgeKind.UNDERPINS)
        if not assumption_edges:
            violations.append(
                Violation(
                    constraint=ConstraintId.C1_EVIDENCE_COMPLETENESS,
                    node_ids=(node.id,),
                    message=f"claim '{node.id}' has no supporting evidence or assumption",
                    repair_hint=HINT_ADD_EVIDENCE,
                )
            )
            continue
        if p.assumption_policy == "block_pending":
            assumptions = [g.node(e.src) for e in assumption_edges]
            if not any(a.approval and a.approval.state == "approved" for a in assumptions):
                ids = tuple(sorted([node.id] + [a.id for a in assumptions]))
                violations.append(
                    Violation(
                        constraint=ConstraintId.C1_EVIDENCE_COMPLETENESS,
                        node_ids=ids,
                        message=(
                            f"claim '{node.id}' rests only on assumptions awaiting approval"
                        ),
                        repair_hint=HINT_APPROVE_ASSUMPTION,
                    )
                )
    return violations


def check_evidence_admissibility(
    g: ArgumentGraph, p: PolicySet, store: Any
) -> list[Violation]:
    """C2: cited evidence must exist in the store under an authorized
    source class and within that class's corpus scope.  Store failures
    propagate; they are infrastructure errors, not verdicts."""
    violations: list[Violation] = []
    for node in g.nodes:
        if node.kind is not NodeKind.EVIDENCE:
            continue
        source_class = p.source_class(node.source_class or "")
        if source_class is None:
            violations.append(
                Violation(
                    constraint=ConstraintId.C2_EVIDENCE_ADMISSIBILITY,
                    node_ids=(node.id,),
                    message=f"source class '{node.source_class}' is not authorized",
                    repair_hint=HINT_REPLACE_EVIDENCE,
                )
            )
            continue
        item = store.lookup(node.evidence_hash or "")
        if item is None:
            violations.append(
                Violation(
                    constraint=ConstraintId.C2_EVIDENCE_ADMISSIBILITY,
                    node_ids=(node.id,),
                    message=(
                        f"evidence hash {str(node.evidence_hash)[:12]}... not in store "
                        "(fabricated source)"
                    ),
                    repair_hint=HINT_REPLACE_EVIDENCE,
                )
            )
            continue
        if item.source_class != node.source_class:
            violations.append(
                Violation(
                    constraint=ConstraintId.C2_EVIDENCE_ADMISSIBILITY,
                    node_ids=(node.id,),
                    message=(
                        f"stored item is classed '{item.source_class}', "
                        f"node claims '{node.source_class}'"
                    ),
                    repair_hint=HINT_REPLACE_EVIDENCE,
                )
            )
            continue
        if source_class.scope and item.corpus_id not in source_class.scope:
            violations.append(
                Violation(
                    constraint=ConstraintId.C2_EVIDENCE_ADMISSIBILITY,
                    node_ids=(node.id,),
                    message=(
                        f"corpus '{item.corpus_id}' outside scope of class "
                        f"'{source_class.id}'"
                    ),
                    repair_hint=HINT_REPLACE_EVIDENCE,
                )
            )
    return violations


def check_rule_coverage(g: ArgumentGraph, p: PolicySet) -> list[Violation]:
    """C3: every claim whose class matches a coverage template must have
    all required classes among its refinement descendants."""
    violations: list[Violation] = []
    for node in g.nodes:
        if node.kind is not NodeKind.CLAIM:
            continue
        templates = p.templates_for(node.claim_class or "")
        if not templates:
            continue
        descendant_classes = {
            g.node(d).claim_class for d in g.refinement_descendants(node.id)
        }
        for template in templates:
            for required in template.required_child_classes:
                if required not in descendant_classes:
                    violations.append(
                        Violation(
                            constraint=ConstraintId.C3_RULE_COVERAGE,
                            node_ids=(node.id,),
                            message=(
                                f"claim '{node.id}' ({node.claim_class}) is missing "
                                f"required subclaim class '{required}'"
                            ),
                            repair_hint=f"{HINT_ADD_SUBCLAIM}:{required}",
                        )
                    )
    return violations


def _contradictory(a, b, p: PolicySet) -> bool:
    if p.has_polarity_rule():
        if a.subject and a.subject == b.subject and a.polarity != b.polarity:
            return True
    if frozenset((a.claim_class, b.claim_class)) in p.mutex_pairs():
        return True
    return False


def check_non_contradiction(g: ArgumentGraph, p: PolicySet) -> list[Violation]:
    """C4: each contradictory claim pair needs an attack edge with a
    prevailing side; unresolved or missing attacks are violations."""
    violations: list[Violation] = []
    claims = g.nodes_of_kind(NodeKind.CLAIM)
    for i, a in enumerate(claims):
        for b in claims[i + 1:]:
            if not _contradictory(a, b, p):
                continue
            attacks = [
                e
                for e in g.outgoing(a.id, EdgeKind.ATTACKS) + g.outgoing(b.id, EdgeKind.ATTACKS)
                if {e.src, e.dst} == {a.id, b.id}
            ]
            pair = tuple(sorted((a.id, b.id)))
            if not attacks:
                violations.append(
                    Violation(
                        constraint=ConstraintId.C4_NON_CONTRADICTION,
                        node_ids=pair,
                        message=(
                            f"claims '{pair[0]}' and '{pair[1]}' are contradictory but "
                            "not joined by an attack edge"
                        ),
                        repair_hint=HINT_ADD_ATTACK_EDGE,
                    )
                )
                continue
            resolved = any(
                e.resolution
                and e.resolution.startswith(RESOLUTION_PREVAILING_PREFIX)
                and e.resolution[len(RESOLUTION_PREVAILING_PREFIX):] in {a.id, b.id}
                for e in attacks
            )
            if not resolved:
                violations.append(
                    Violation(
                        constraint=ConstraintId.C4_NON_CONTRADICTION,
                        node_ids=pair,
                        edge_ids=tuple(sorted(e.id for e in attacks)),
                        message=(
                            f"attack between '{pair[0]}' and '{pair[1]}' has no "
                            "prevailing side"
                        ),
                        repair_hint=HINT_RESOLVE_ATTACK,
                    )
                )
    violations.sort(key=lambda v: v.node_ids)
    return violations


def check_provenance_completeness(
    g: ArgumentGraph, prov_draft: ProvenanceDraft
) -> list[Violation]:
    """C5: AI nodes must reference a generation activity carrying model,
    prompt-template and retrieval-set identifiers; human-edited nodes
    need a recorded edit activity by a human agent."""
    violations: list[Violation] = []
    for node in g.nodes:
        if node.generator == "ai":
            ref = node.generation_ref
            activity = prov_draft.activities.get(ref) if ref else None
            if activity is None:
                violations.append(
                    Violation(
                        constraint=ConstraintId.C5_PROVENANCE_COMPLETENESS,
                        node_ids=(node.id,),
                        message=(
                            f"AI-generated node '{node.id}' has "
                            + ("no generation reference" if not ref
                               else f"a dangling generation reference '{ref}'")
                        ),
                        repair_hint=HINT_ATTACH_GENERATION_REF,
                    )
                )
                continue
            missing = [key for key in GENERATION_ATTRS if not activity.attr(key)]
            if missing:
                violations.append(
                    Violation(
                        constraint=ConstraintId.C5_PROVENANCE_COMPLETENESS,
                        node_ids=(node.id,),
                        message=(
                            f"generation activity '{activity.id}' lacks "
                            + ", ".join(missing)
                        ),
                        repair_hint=HINT_ATTACH_GENERATION_REF,
                    )
                )
        elif node.generator == "human":
            edited = any(
                activity.kind == "edit"
                and node.id in activity.generated
                and prov_draft.agent_kind(activity.agent) == "human"
                for activity in prov_draft.activities.values()
            )
            if not edited:
                violations.append(
                    Violation(
                        constraint=ConstraintId.C5_PROVENANCE_COMPLETENESS,
                        node_ids=(node.id,),
                        message=(
                            f"human-authored node '{node.id}' has no recorded edit "
                            "activity by a human agent"
                        ),
                        repair_hint=HINT_RECORD_EDIT_ACTIVITY,
                    )
                )
    return violations


def valid(
    g: ArgumentGraph,
    p: PolicySet,
    store: Any,
    prov_draft: ProvenanceDraft | None = None,
) -> ValidationResult:
    """Run all five checks in constraint order; deterministic for
    identical (graph, policy, store snapshot, provenance) inputs."""
    prov_draft = prov_draft or ProvenanceDraft()
    violations: list[Violation] = []
    violations.extend(check_evidence_completeness(g, p))
    violations.extend(check_evidence_admissibility(g, p, store))
    violations.extend(check_rule_coverage(g, p))
    violations.extend(check_non_contradiction(g, p))
    violations.extend(check_provenance_completeness(g, prov_draft))
    return ValidationResult(
        valid=not violations,
        violations=tuple(violations),
        graph_hash=graph_hash(g),
        policy_fingerprint=policy_fingerprint(p),
    )


def explain_violations(
    g: ArgumentGraph,
    p: PolicySet,
    store: Any,
    prov_draft: ProvenanceDraft | None = None,
) -> ViolationReport:
    """The feedback value for the repair loop; only meaningful for
    invalid graphs."""
    result = valid(g, p, store, prov_draft)
    if result.valid:
        raise CalledOnValidGraph("graph satisfies all constraints")
    return report_from_result(result)


def report_from_result(result: ValidationResult) -> ViolationReport:
    return ViolationReport(
        valid=result.valid,
        violations=result.violations,
        graph_hash=result.graph_hash,
        policy_fingerprint=result.policy_fingerprint,
    )
