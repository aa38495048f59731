"""End-to-end orchestration: case in, certified decision package out.

The flow is: build the case knowledge graph, retrieve admissible
evidence, let the drafter propose a typed argument document, parse and
validate it, and either persist it with full provenance or feed the
violation report back into a bounded repair loop.  Runs that cannot be
repaired automatically land in the escalation queue for human action
(assumption approval, evidence replacement), after which they re-enter
validation before anything is persisted.

Persistence is structurally gated: `persist` demands a valid report
computed for the exact graph hash under the pinned policy fingerprint,
so no public path can store an unvalidated graph.
"""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .canonical import canonical_bytes
from .casekg import CaseError, build_case_knowledge_graph
from .clock import SystemClock
from .drafter import (
    DraftError,
    EndpointDrafter,
    EndpointUnreachable,
    Fault,
    FaultsNotAllowed,
    MalformedResponse,
    REFERENCE_META,
    ReferenceDrafter,
    request_from_policy,
    prompt_template_hash,
)
from .evidence import (
    EvidenceStore,
    IntegrityError,
    RetrievalSet,
    StoreUnavailable,
    retrieve_evidence,
)
from .kernel import (
    ValidationResult,
    ViolationReport,
    report_from_result,
    valid,
)
from .ledger import (
    AuditIndex,
    Ledger,
    ProvActivity,
    ProvAgent,
    ProvEntity,
    ProvenanceDraft,
    emit_provenance,
    evidence_entity_id,
    graph_entity_id,
)
from .model import (
    ArgumentGraph,
    NodeKind,
    ParseError,
    export_gsn,
    graph_hash,
    parse_and_normalize,
)
from .policy import PolicySet, load_policy, policy_fingerprint

STATUS_ACCEPTED = "accepted"
STATUS_ESCALATED = "escalated"
STATUS_FAILED = "failed"


class PipelineError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class GatingViolation(PipelineError):
    """Attempt to persist a graph without a matching valid verdict."""

    def __init__(self, message: str):
        super().__init__("GatingViolation", message)


@dataclass(frozen=True)
class DecisionPackage:
    graph_id: str
    graph: ArgumentGraph
    document: bytes
    report: ViolationReport
    prov_first_seq: int
    prov_last_seq: int
    gsn_dot: bytes
    gsn_json: bytes
    summary: str
    retrieval_set_id: str
    created_at: str

    def to_obj(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "case_id": self.graph.meta.case_id,
            "policy_id": self.graph.meta.policy_id,
            "policy_version": self.graph.meta.policy_version,
            "retrieval_set_id": self.retrieval_set_id,
            "prov_first_seq": self.prov_first_seq,
            "prov_last_seq": self.prov_last_seq,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class RunOutcome:
    status: str
    rounds_used: int = 0
    package: DecisionPackage | None = None
    report: ViolationReport | None = None
    error: str = ""
    queue_ref: str = ""

    def to_obj(self) -> dict:
        obj: dict[str, Any] = {"status": self.status, "rounds_used": self.rounds_used}
        if self.package is not None:
            obj["package"] = self.package.to_obj()
        if self.report is not None:
            obj["report"] = self.report.to_obj()
        if self.error:
            obj["error"] = self.error
        if self.queue_ref:
            obj["queue_ref"] = self.queue_ref
        return obj


@dataclass
class PipelineConfig:
    policy: PolicySet
    home: Path
    drafter: str = "reference"  # reference | endpoint
    endpoint_url: str = ""
    endpoint_fallback: bool = True
    endpoint_timeout: float = 30.0
    faults: tuple[Fault, ...] = ()
    clock: Any = field(default_factory=SystemClock)
    release_mode: bool = False
    durable_ledger: bool = True

    @classmethod
    def from_paths(cls, policy_path: Path | str, home: Path | str, **kwargs) -> "PipelineConfig":
        policy = load_policy(Path(policy_path).read_bytes())
        return cls(policy=policy, home=Path(home), **kwargs)


@contextmanager
def case_lock(home: Path, case_id: str):
    """Per-case mutual exclusion for processes sharing one data root."""
    locks = home / "locks"
    locks.mkdir(parents=True, exist_ok=True)
    path = locks / f"{case_id}.lock"
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PipelineError("CaseLocked", f"case '{case_id}' is already being processed")
    try:
        os.close(fd)
        yield
    finally:
        path.unlink(missing_ok=True)


class Pipeline:
    """One pipeline instance per data root; safe for sequential runs of
    independent cases."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.policy = config.policy
        self.policy_fp = policy_fingerprint(self.policy)
        self.home = Path(config.home)
        self.clock = config.clock
        self.store = EvidenceStore(self.home / "store", clock=self.clock)
        self.ledger = Ledger(
            self.home / "ledger" / "prov.ndjson",
            clock=self.clock,
            durable=config.durable_ledger,
        )
        self.graphs_dir = self.home / "graphs"
        self.queue_dir = self.home / "queue"
        self.graphs_dir.mkdir(parents=True, exist_ok=True)
        self.queue_dir.mkdir(parents=True, exist_ok=True)
        if config.release_mode and config.faults:
            raise FaultsNotAllowed("fault injection is disabled in release mode")
        meta = REFERENCE_META
        self._reference = ReferenceDrafter(meta, allow_faults=not config.release_mode)
        self._endpoint = (
            EndpointDrafter(config.endpoint_url, replace(meta, drafter_id="endpoint-drafter"),
                            timeout=config.endpoint_timeout)
            if config.drafter == "endpoint"
            else None
        )
        self._policy_entity = f"ent-policy-{self.policy_fp[:12]}"
        self.ledger.ensure_agent(ProvAgent(id="agent-system", kind="software", display="pipeline"))
        if self.ledger.find_entity(self._policy_entity) is None:
            self.ledger.record_entity(
                ProvEntity(
                    id=self._policy_entity,
                    kind="policy",
                    content_hash=self.policy_fp,
                    attributes=(("policy_id", self.policy.id),
                                ("policy_version", self.policy.version)),
                )
            )

    @property
    def audit(self) -> AuditIndex:
        return AuditIndex(self.ledger, self.graphs_dir)

    def register_agent(self, agent_id: str, kind: str, display: str = "") -> None:
        self.ledger.ensure_agent(ProvAgent(id=agent_id, kind=kind, display=display))

    # -- drafting -----------------------------------------------------------

    def _draft(self, req, drafter_meta_out: dict) -> Any:
        faults = self.config.faults
        if self._endpoint is not None:
            try:
                doc = self._endpoint.draft(req) if req.round == 1 else self._endpoint.repair(req)
                drafter_meta_out["meta"] = self._endpoint.meta
                drafter_meta_out["fallback"] = ""
                return doc
            except (EndpointUnreachable, MalformedResponse) as exc:
                if not self.config.endpoint_fallback:
                    raise
                drafter_meta_out["fallback"] = f"{type(exc).__name__}: {exc}"
        drafter_meta_out["meta"] = self._reference.meta
        if req.round == 1:
            return self._reference.draft(req, faults)
        return self._reference.repair(req, faults)

    def _build_prov_draft(
        self, *, case_id: str, round_no: int, retrieval: RetrievalSet, meta, fallback: str
    ) -> ProvenanceDraft:
        prov = ProvenanceDraft()
        model_agent = ProvAgent(id=f"agent-{meta.model_id}", kind="model", display=meta.model_id)
        prov.add_agent(model_agent)
        stamp = self.clock.now()
        attrs = [
            ("case_id", case_id),
            ("model_id", meta.model_id),
            ("model_version", meta.model_version),
            ("prompt_template_id", meta.prompt_template_id),
            ("prompt_template_version", meta.prompt_template_version),
            ("retrieval_set_id", retrieval.id),
            ("round", str(round_no)),
        ]
        if fallback:
            attrs.append(("fallback_from_endpoint", fallback))
        used = [
            self._policy_entity,
            f"ent-kg-{retrieval.kg_hash[:12]}",
            f"ent-ret-{retrieval.id[:12]}",
        ] + [evidence_entity_id(h) for h in retrieval.hashes()]
        prov.add_activity(
            ProvActivity(
                id=f"act-draft-{case_id}-r{round_no}",
                kind="draft" if round_no == 1 else "repair",
                started=stamp,
                ended=stamp,
                agent=model_agent.id,
                used=tuple(used),
                attributes=tuple(attrs),
            )
        )
        return prov

    # -- the main loop ------------------------------------------------------

    def run_case(self, case_doc: Any) -> RunOutcome:
        try:
            kg = build_case_knowledge_graph(case_doc)
        except CaseError as exc:
            return RunOutcome(status=STATUS_FAILED, error=str(exc))
        with case_lock(self.home, kg.case_id):
            return self._run(kg, case_doc)

    def _run(self, kg, case_doc: Any) -> RunOutcome:
        case_id = kg.case_id
        try:
            snapshot = self.store.snapshot()
            retrieval = retrieve_evidence(snapshot, kg, self.policy)
        except (StoreUnavailable, IntegrityError) as exc:
            self._ledger_failure(case_id, str(exc))
            return RunOutcome(status=STATUS_FAILED, error=str(exc))

        kg_entity = f"ent-kg-{kg.hash[:12]}"
        if self.ledger.find_entity(kg_entity) is None:
            self.ledger.record_entity(
                ProvEntity(id=kg_entity, kind="case_kg", content_hash=kg.hash,
                           attributes=(("case_id", case_id),))
            )
            stamp = self.clock.now()
            self.ledger.record_activity(
                ProvActivity(
                    id=f"act-build-kg-{kg.hash[:12]}",
                    kind="build_kg",
                    started=stamp,
                    ended=stamp,
                    agent="agent-system",
                    generated=(kg_entity,),
                    attributes=(("case_id", case_id),),
                )
            )
        ret_entity = f"ent-ret-{retrieval.id[:12]}"
        if self.ledger.find_entity(ret_entity) is None:
            self.ledger.record_entity(
                ProvEntity(
                    id=ret_entity, kind="retrieval_set", content_hash=retrieval.id,
                    attributes=(("k", str(retrieval.k)),
                                ("scoring_version", retrieval.scoring_version)),
                )
            )
            for item_hash in retrieval.hashes():
                entity_id = evidence_entity_id(item_hash)
                if self.ledger.find_entity(entity_id) is None:
                    item = snapshot.lookup(item_hash)
                    self.ledger.record_entity(
                        ProvEntity(
                            id=entity_id, kind="evidence_item", content_hash=item_hash,
                            attributes=(("corpus_id", item.corpus_id),
                                        ("source_class", item.source_class),
                                        ("title", item.title)),
                        )
                    )
            stamp = self.clock.now()
            self.ledger.record_activity(
                ProvActivity(
                    id=f"act-retrieve-{retrieval.id[:12]}",
                    kind="retrieve",
                    started=stamp,
                    ended=stamp,
                    agent="agent-system",
                    used=(kg_entity, self._policy_entity),
                    generated=(ret_entity,),
                    attributes=(
                        ("case_id", case_id),
                        ("k", str(retrieval.k)),
                        ("scoring_version", retrieval.scoring_version),
                        ("kg_hash", kg.hash),
                    ),
                )
            )

        feedback: ViolationReport | None = None
        rounds = 0
        max_rounds = self.policy.max_repair_rounds
        while rounds < max_rounds:
            rounds += 1
            gen_ref = f"act-draft-{case_id}-r{rounds}"
            try:
                req = request_from_policy(
                    case_id=case_id,
                    decision_class=kg.decision_class,
                    kg_hash=kg.hash,
                    retrieval=retrieval,
                    snapshot=snapshot,
                    policy=self.policy,
                    policy_fp=self.policy_fp,
                    round=rounds,
                    feedback=feedback,
                    generation_ref=gen_ref,
                )
                meta_out: dict = {}
                draft_doc = self._draft(req, meta_out)
            except (DraftError, EndpointUnreachable, MalformedResponse) as exc:
                self._ledger_failure(case_id, str(exc))
                return RunOutcome(status=STATUS_FAILED, rounds_used=rounds, error=str(exc))
            try:
                graph = parse_and_normalize(draft_doc.content)
            except ParseError as exc:
                self._ledger_failure(case_id, str(exc))
                return RunOutcome(status=STATUS_FAILED, rounds_used=rounds, error=str(exc))

            prov_draft = self._build_prov_draft(
                case_id=case_id,
                round_no=rounds,
                retrieval=retrieval,
                meta=meta_out["meta"],
                fallback=meta_out.get("fallback", ""),
            )
            try:
                result = valid(graph, self.policy, snapshot, prov_draft)
            except (StoreUnavailable, IntegrityError) as exc:
                self._ledger_failure(case_id, str(exc))
                return RunOutcome(status=STATUS_FAILED, rounds_used=rounds, error=str(exc))

            if result.valid:
                package = self._persist_internal(
                    graph, result, prov_draft, kg, retrieval, snapshot, rounds
                )
                return RunOutcome(status=STATUS_ACCEPTED, rounds_used=rounds, package=package)

            report = report_from_result(result)
            stamp = self.clock.now()
            self.ledger.record_activity(
                ProvActivity(
                    id=f"act-validate-{case_id}-r{rounds}-{len(self.ledger)}",
                    kind="validate",
                    started=stamp,
                    ended=stamp,
                    agent="agent-system",
                    used=(self._policy_entity,),
                    attributes=(
                        ("case_id", case_id),
                        ("outcome", "invalid"),
                        ("graph_hash", result.graph_hash),
                        ("policy_fingerprint", result.policy_fingerprint),
                        ("round", str(rounds)),
                        ("violations", str(len(result.violations))),
                    ),
                )
            )
            if rounds >= max_rounds or not report.repairable():
                queue_ref = self._enqueue(
                    case_id, case_doc, graph, report, prov_draft, kg, retrieval, rounds
                )
                return RunOutcome(
                    status=STATUS_ESCALATED,
                    rounds_used=rounds,
                    report=report,
                    queue_ref=queue_ref,
                )
            feedback = report
        raise AssertionError("unreachable: loop is bounded by max_repair_rounds")

    def _ledger_failure(self, case_id: str, message: str) -> None:
        stamp = self.clock.now()
        try:
            self.ledger.record_activity(
                ProvActivity(
                    id=f"act-validate-{case_id}-error-{len(self.ledger)}",
                    kind="validate",
                    started=stamp,
                    ended=stamp,
                    agent="agent-system",
                    attributes=(("case_id", case_id), ("outcome", "error"),
                                ("message", message)),
                )
            )
        except Exception:
            pass  # failure reporting must not mask the original failure

    # -- persistence (the gate) ----------------------------------------------

    def persist(
        self,
        graph: ArgumentGraph,
        result: ValidationResult,
        prov_draft: ProvenanceDraft,
        kg,
        retrieval: RetrievalSet,
        snapshot,
        rounds: int = 1,
    ) -> DecisionPackage:
        """Public persist; structurally gated. Reachable only with a valid
        result computed for this exact graph under the pinned policy."""
        return self._persist_internal(graph, result, prov_draft, kg, retrieval, snapshot, rounds)

    def _persist_internal(
        self, graph, result, prov_draft, kg, retrieval, snapshot, rounds
    ) -> DecisionPackage:
        if not result.valid:
            raise GatingViolation("validation result is not valid")
        current_hash = graph_hash(graph)
        if result.graph_hash != current_hash:
            raise GatingViolation(
                f"report was computed for {result.graph_hash[:12]}..., "
                f"graph hashes to {current_hash[:12]}..."
            )
        if result.policy_fingerprint != self.policy_fp:
            raise GatingViolation("report was computed under a different policy")

        graph = graph.with_id(current_hash)
        stamp = self.clock.now()
        validate_activity = ProvActivity(
            id=f"act-validate-{graph.meta.case_id}-{graph.id[:12]}",
            kind="validate",
            started=stamp,
            ended=stamp,
            agent="agent-system",
            used=(graph_entity_id(graph.id), self._policy_entity),
            attributes=(
                ("case_id", graph.meta.case_id),
                ("outcome", "valid"),
                ("graph_hash", graph.id),
                ("policy_fingerprint", result.policy_fingerprint),
                ("round", str(rounds)),
            ),
        )
        record = emit_provenance(
            self.ledger,
            graph=graph,
            kg=kg,
            retrieval=retrieval,
            snapshot=snapshot,
            policy=self.policy,
            policy_fp=self.policy_fp,
            prompt_template_hash=prompt_template_hash(),
            prov_draft=prov_draft,
            validate_activity=validate_activity,
        )

        report = report_from_result(result)
        document = canonical_bytes(graph.to_obj())
        gsn_dot = export_gsn(graph, "dot")
        gsn_json = export_gsn(graph, "gsn-json")
        created_at = self.clock.now()
        summary = self._summary(graph, record, rounds, created_at)
        package = DecisionPackage(
            graph_id=graph.id,
            graph=graph,
            document=document,
            report=report,
            prov_first_seq=record.first_seq,
            prov_last_seq=record.last_seq,
            gsn_dot=gsn_dot,
            gsn_json=gsn_json,
            summary=summary,
            retrieval_set_id=retrieval.id,
            created_at=created_at,
        )
        out = self.graphs_dir / graph.id
        out.mkdir(parents=True, exist_ok=True)
        (out / "ag.json").write_bytes(document)
        (out / "report.json").write_bytes(report.to_bytes())
        (out / "gsn.dot").write_bytes(gsn_dot)
        (out / "gsn.json").write_bytes(gsn_json)
        (out / "summary.txt").write_text(summary, encoding="utf-8")
        (out / "package.json").write_bytes(canonical_bytes(package.to_obj()))
        return package

    def _summary(self, graph, record, rounds, created_at) -> str:
        counts = {kind.value: len(graph.nodes_of_kind(kind)) for kind in NodeKind}
        lines = [
            f"Decision package {graph.id}",
            f"Case: {graph.meta.case_id}",
            f"Policy: {graph.meta.policy_id} v{graph.meta.policy_version} "
            f"(fingerprint {self.policy_fp[:12]})",
            f"Accepted after {rounds} round(s) at {created_at}",
            "Nodes: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items()) if v),
            f"Edges: {len(graph.edges)}",
            f"Ledger entries: {record.first_seq}..{record.last_seq}",
        ]
        return "\n".join(lines) + "\n"

    # -- escalation queue and human actions ----------------------------------

    def _enqueue(
        self, case_id, case_doc, graph, report, prov_draft, kg, retrieval, rounds
    ) -> str:
        candidate = graph_hash(graph)
        if isinstance(case_doc, (bytes, bytearray)):
            case_doc = json.loads(case_doc.decode("utf-8"))
        elif isinstance(case_doc, str):
            case_doc = json.loads(case_doc)
        entry = {
            "candidate_hash": candidate,
            "case_id": case_id,
            "rounds_used": rounds,
            "document": graph.to_obj(),
            "report": report.to_obj(),
            "prov_draft": prov_draft.to_obj(),
            "retrieval": retrieval.to_obj(),
            "case_doc": case_doc,
            "faults": [str(f) for f in self.config.faults],
            "created_at": self.clock.now(),
        }
        (self.queue_dir / f"{candidate}.json").write_bytes(canonical_bytes(entry))
        return candidate

    def queue_entries(self) -> list[dict]:
        entries = []
        for path in sorted(self.queue_dir.glob("*.json")):
            entries.append(json.loads(path.read_text(encoding="utf-8")))
        return entries

    def queue_entry(self, ref: str) -> dict:
        path = self.queue_dir / f"{ref}.json"
        if not path.exists():
            raise PipelineError("UnknownGraph", f"no escalated graph {ref}")
        return json.loads(path.read_text(encoding="utf-8"))

    def find_queued_assumption(self, assumption_id: str) -> dict | None:
        for entry in self.queue_entries():
            for node in entry["document"]["nodes"]:
                if node["id"] == assumption_id and node["kind"] == "Assumption":
                    return entry
        return None

    def approve_assumption(self, queue_ref: str, assumption_id: str, agent_id: str) -> RunOutcome:
        """Human approval of a pending assumption on an escalated graph;
        on success the graph is revalidated and, if valid, persisted."""
        entry = self.queue_entry(queue_ref)
        agent = self.ledger.find_agent(agent_id)
        if agent is None or agent.kind != "human":
            raise PipelineError(
                "NotHumanAgent", f"agent '{agent_id}' is not a registered human agent"
            )
        doc = entry["document"]
        target = None
        for node in doc["nodes"]:
            if node["id"] == assumption_id:
                target = node
                break
        if target is None or target.get("kind") != "Assumption":
            raise PipelineError("UnknownAssumption", f"no assumption '{assumption_id}'")
        approval = target.get("approval") or {"state": "pending"}
        if approval.get("state") == "approved":
            raise PipelineError("AlreadyApproved", f"assumption '{assumption_id}' already approved")
        stamp = self.clock.now()
        target["approval"] = {"state": "approved", "agent": agent_id, "timestamp": stamp}

        graph = parse_and_normalize(canonical_bytes(doc))
        prov_draft = ProvenanceDraft.from_obj(entry["prov_draft"])
        prov_draft.add_agent(agent)
        new_hash = graph_hash(graph)
        prov_draft.add_activity(
            ProvActivity(
                id=f"act-approve-{entry['case_id']}-{assumption_id[:24]}",
                kind="approve",
                started=stamp,
                ended=stamp,
                agent=agent_id,
                attributes=(
                    ("case_id", entry["case_id"]),
                    ("assumption_id", assumption_id),
                    ("graph_id", new_hash),
                ),
            )
        )
        snapshot = self.store.snapshot()
        retrieval = _retrieval_from_obj(entry["retrieval"])
        kg = build_case_knowledge_graph(entry["case_doc"])
        result = valid(graph, self.policy, snapshot, prov_draft)
        rounds = int(entry.get("rounds_used", 1))
        if result.valid:
            package = self._persist_internal(
                graph, result, prov_draft, kg, retrieval, snapshot, rounds
            )
            (self.queue_dir / f"{queue_ref}.json").unlink(missing_ok=True)
            return RunOutcome(status=STATUS_ACCEPTED, rounds_used=rounds, package=package)
        # Approval recorded, but other violations remain: keep it queued.
        report = report_from_result(result)
        for activity in prov_draft.activities.values():
            if activity.kind == "approve" and self.ledger.find_activity(activity.id) is None:
                self.ledger.ensure_agent(agent)
                self.ledger.record_activity(activity)
        entry.update(
            {
                "candidate_hash": new_hash,
                "document": graph.to_obj(),
                "report": report.to_obj(),
                "prov_draft": prov_draft.to_obj(),
            }
        )
        (self.queue_dir / f"{queue_ref}.json").unlink(missing_ok=True)
        (self.queue_dir / f"{new_hash}.json").write_bytes(canonical_bytes(entry))
        return RunOutcome(
            status=STATUS_ESCALATED,
            rounds_used=rounds,
            report=report,
            queue_ref=new_hash,
        )

    def rerun(self, case_id: str) -> RunOutcome:
        """Re-enter an escalated case at the drafting stage (fresh run
        against the current store)."""
        entry = None
        for candidate in self.queue_entries():
            if candidate["case_id"] == case_id:
                entry = candidate
                break
        if entry is None:
            raise PipelineError("UnknownCase", f"no escalated case '{case_id}'")
        outcome = self.run_case(entry["case_doc"])
        if outcome.status == STATUS_ACCEPTED:
            (self.queue_dir / f"{entry['candidate_hash']}.json").unlink(missing_ok=True)
        return outcome

    # -- oversight actions -----------------------------------------------------

    def annotate(self, node_id: str, text: str, agent_id: str) -> None:
        """Attach a reviewer note to a node of a persisted or queued graph;
        stored as an edit activity on the ledger only."""
        agent = self.ledger.find_agent(agent_id)
        if agent is None or agent.kind != "human":
            raise PipelineError("NotHumanAgent", f"agent '{agent_id}' is not a registered human agent")
        graph_id = self._locate_node(node_id)
        if graph_id is None:
            raise PipelineError("UnknownNode", f"no known node '{node_id}'")
        stamp = self.clock.now()
        self.ledger.record_activity(
            ProvActivity(
                id=f"act-edit-{node_id[:24]}-{len(self.ledger)}",
                kind="edit",
                started=stamp,
                ended=stamp,
                agent=agent_id,
                attributes=(
                    ("node_id", node_id),
                    ("graph_id", graph_id),
                    ("annotation", text),
                ),
            )
        )

    def override(self, graph_id: str, disposition: str, rationale: str, agent_id: str) -> dict:
        """Append-only human override of a persisted decision; the original
        graph is never mutated."""
        if not rationale:
            raise PipelineError("MissingRationale", "override requires a rationale")
        agent = self.ledger.find_agent(agent_id)
        if agent is None or agent.kind != "human":
            raise PipelineError("NotHumanAgent", f"agent '{agent_id}' is not a registered human agent")
        package_dir = self.graphs_dir / graph_id
        if not (package_dir / "ag.json").exists():
            raise PipelineError("UnknownGraph", f"no persisted graph {graph_id}")
        stamp = self.clock.now()
        record = {
            "graph_id": graph_id,
            "disposition": disposition,
            "rationale": rationale,
            "agent": agent_id,
            "timestamp": stamp,
        }
        overrides = package_dir / "overrides.ndjson"
        with open(overrides, "ab") as fh:
            fh.write(canonical_bytes(record) + b"\n")
        self.ledger.record_activity(
            ProvActivity(
                id=f"act-override-{graph_id[:12]}-{len(self.ledger)}",
                kind="override",
                started=stamp,
                ended=stamp,
                agent=agent_id,
                used=(graph_entity_id(graph_id),),
                attributes=(
                    ("graph_id", graph_id),
                    ("disposition", disposition),
                    ("rationale", rationale),
                ),
            )
        )
        return record

    def _locate_node(self, node_id: str) -> str | None:
        for path in sorted(self.graphs_dir.iterdir()) if self.graphs_dir.exists() else []:
            ag = path / "ag.json"
            if ag.exists():
                graph = parse_and_normalize(ag.read_bytes())
                if graph.has_node(node_id):
                    return path.name
        for entry in self.queue_entries():
            for node in entry["document"]["nodes"]:
                if node["id"] == node_id:
                    return entry["candidate_hash"]
        return None


def _retrieval_from_obj(obj: dict) -> RetrievalSet:
    return RetrievalSet(
        id=obj["id"],
        items=tuple((i["hash"], i["score"]) for i in obj["items"]),
        k=obj["k"],
        scoring_version=obj["scoring_version"],
        kg_hash=obj["kg_hash"],
        policy_fingerprint=obj["policy_fingerprint"],
    )
