"""arggate: evidence-gated argument graphs.

Generative drafters propose typed argument fragments; a deterministic
validation kernel decides what may enter the persisted decision record,
and a hash-chained provenance ledger keeps every step reconstructable.
"""

from .casekg import CaseKnowledgeGraph, build_case_knowledge_graph
from .drafter import DraftRequest, DrafterMeta, Fault, ReferenceDrafter
from .evidence import EvidenceItem, EvidenceStore, RetrievalSet, retrieve_evidence
from .kernel import (
    ConstraintId,
    ValidationResult,
    Violation,
    ViolationReport,
    explain_violations,
    valid,
)
from .ledger import AuditIndex, Ledger, ProvenanceDraft
from .model import (
    ArgEdge,
    ArgNode,
    ArgumentGraph,
    EdgeKind,
    NodeKind,
    ParseError,
    canonical_serialize,
    export_gsn,
    graph_hash,
    parse_and_normalize,
)
from .pipeline import DecisionPackage, Pipeline, PipelineConfig, RunOutcome
from .policy import PolicySet, load_policy, policy_fingerprint

__version__ = "0.1.0"

__all__ = [
    "ArgEdge",
    "ArgNode",
    "ArgumentGraph",
    "AuditIndex",
    "CaseKnowledgeGraph",
    "ConstraintId",
    "DecisionPackage",
    "DraftRequest",
    "DrafterMeta",
    "EdgeKind",
    "EvidenceItem",
    "EvidenceStore",
    "Fault",
    "Ledger",
    "NodeKind",
    "ParseError",
    "Pipeline",
    "PipelineConfig",
    "PolicySet",
    "ProvenanceDraft",
    "ReferenceDrafter",
    "RetrievalSet",
    "RunOutcome",
    "ValidationResult",
    "Violation",
    "ViolationReport",
    "build_case_knowledge_graph",
    "canonical_serialize",
    "explain_violations",
    "export_gsn",
    "graph_hash",
    "load_policy",
    "parse_and_normalize",
    "policy_fingerprint",
    "retrieve_evidence",
    "valid",
]
