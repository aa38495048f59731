from __future__ import annotations

import json

import pytest

from arggate.drafter import Fault
from arggate.kernel import ConstraintId, valid
from arggate.ledger import AuditError, ProvenanceDraft
from arggate.model import EdgeKind, NodeKind, parse_and_normalize
from arggate.pipeline import GatingViolation, PipelineError

from conftest import fixture_bytes, make_pipeline


def rebuild_prov_draft(pipeline) -> ProvenanceDraft:
    draft = ProvenanceDraft()
    for entry in pipeline.ledger.entries():
        payload = entry.payload
        if payload.get("record_kind") == "agent":
            from arggate.ledger import ProvAgent

            draft.add_agent(ProvAgent(id=payload["id"], kind=payload["kind"],
                                      display=payload.get("display", "")))
        elif payload.get("record_kind") == "activity":
            from arggate.ledger import _activity_from_payload

            draft.add_activity(_activity_from_payload(payload))
    return draft


def run_golden(pipeline, case_doc=None):
    return pipeline.run_case(case_doc or fixture_bytes("benefits_case.json"))


class TestGoldenScenario:
    def test_escalates_on_pending_assumption(self, golden_pipeline):
        outcome = run_golden(golden_pipeline)
        assert outcome.status == "escalated"
        assert outcome.rounds_used == 1
        hints = {v.repair_hint for v in outcome.report.violations}
        assert hints == {"APPROVE_ASSUMPTION"}
        assert golden_pipeline.queue_entries()

    def test_approval_unblocks_and_persists(self, golden_pipeline):
        outcome = run_golden(golden_pipeline)
        golden_pipeline.register_agent("reviewer-1", "human", "Reviewer One")
        approved = golden_pipeline.approve_assumption(
            outcome.queue_ref, "a-case-2219-evidence-set-complete", "reviewer-1"
        )
        assert approved.status == "accepted"
        package = approved.package
        assert package is not None
        graph = package.graph
        assert len(graph.nodes) == 9
        assert len(graph.nodes_of_kind(NodeKind.CLAIM)) == 5
        assert package.gsn_dot.decode().count("dashed") == 1
        assert not golden_pipeline.queue_entries()
        # the approve activity is on the ledger, attributed to the human
        approvals = golden_pipeline.audit.audit_approvals(package.graph_id)
        assert [a["agent"] for a in approvals] == ["reviewer-1"]
        assert approvals[0]["action"] == "approve"

    def test_approval_by_model_agent_rejected(self, golden_pipeline):
        outcome = run_golden(golden_pipeline)
        golden_pipeline.register_agent("bot-9", "model", "A model")
        with pytest.raises(PipelineError) as err:
            golden_pipeline.approve_assumption(
                outcome.queue_ref, "a-case-2219-evidence-set-complete", "bot-9"
            )
        assert err.value.code == "NotHumanAgent"

    def test_double_approval_rejected(self, golden_pipeline):
        outcome = run_golden(golden_pipeline)
        golden_pipeline.register_agent("reviewer-1", "human")
        # mark the queued assumption approved in place, then approve again
        path = golden_pipeline.queue_dir / f"{outcome.queue_ref}.json"
        entry = json.loads(path.read_text())
        for node in entry["document"]["nodes"]:
            if node["kind"] == "Assumption":
                node["approval"] = {"state": "approved", "agent": "reviewer-1",
                                    "timestamp": "2026-01-01T00:00:00Z"}
        path.write_text(json.dumps(entry))
        with pytest.raises(PipelineError) as err:
            golden_pipeline.approve_assumption(
                outcome.queue_ref, "a-case-2219-evidence-set-complete", "reviewer-1"
            )
        assert err.value.code == "AlreadyApproved"

    def test_unknown_assumption_rejected(self, golden_pipeline):
        outcome = run_golden(golden_pipeline)
        golden_pipeline.register_agent("reviewer-1", "human")
        with pytest.raises(PipelineError) as err:
            golden_pipeline.approve_assumption(outcome.queue_ref, "a-missing", "reviewer-1")
        assert err.value.code == "UnknownAssumption"


class TestRepairLoop:
    def test_fault_free_covered_run_accepts_round_one(self, covered_pipeline):
        outcome = run_golden(covered_pipeline)
        assert outcome.status == "accepted"
        assert outcome.rounds_used == 1

    @pytest.mark.parametrize("spec", ["OMIT_REQUIRED_SUBCLAIM:identity_verified",
                                      "DROP_EVIDENCE_LINK"])
    def test_repairable_fault_accepted_round_two(self, tmp_path, spec):
        pipeline = make_pipeline(tmp_path / "home", with_rationale=True,
                                 faults=(Fault.parse(spec),))
        outcome = run_golden(pipeline)
        assert outcome.status == "accepted"
        assert outcome.rounds_used == 2

    def test_fabricated_evidence_escalates_with_single_c2(self, tmp_path):
        pipeline = make_pipeline(tmp_path / "home", with_rationale=True,
                                 faults=(Fault.parse("FABRICATE_EVIDENCE_ID"),))
        outcome = run_golden(pipeline)
        assert outcome.status == "escalated"
        assert outcome.rounds_used == 1
        assert len(outcome.report.violations) == 1
        assert outcome.report.violations[0].constraint is ConstraintId.C2_EVIDENCE_ADMISSIBILITY

    def test_contradiction_escalates(self, tmp_path):
        pipeline = make_pipeline(tmp_path / "home", with_rationale=True,
                                 faults=(Fault.parse("INJECT_CONTRADICTION"),))
        outcome = run_golden(pipeline)
        assert outcome.status == "escalated"
        assert {v.constraint for v in outcome.report.violations} == {
            ConstraintId.C4_NON_CONTRADICTION
        }

    def test_monotone_progress_on_mixed_faults(self, tmp_path):
        pipeline = make_pipeline(
            tmp_path / "home", with_rationale=True,
            faults=(Fault.parse("FABRICATE_EVIDENCE_ID"),
                    Fault.parse("OMIT_REQUIRED_SUBCLAIM:identity_verified")),
        )
        outcome = run_golden(pipeline)
        # round 1: C2 + C3; round 2 repairs C3, C2 remains -> escalate
        assert outcome.status == "escalated"
        assert outcome.rounds_used == 2
        assert {v.constraint for v in outcome.report.violations} == {
            ConstraintId.C2_EVIDENCE_ADMISSIBILITY
        }
        validates = [a for a in pipeline.ledger.activities("validate")
                     if a.attr("outcome") == "invalid"]
        counts = [int(a.attr("violations")) for a in validates]
        assert counts == sorted(counts, reverse=True)

    def test_every_round_has_a_validate_activity(self, tmp_path):
        pipeline = make_pipeline(tmp_path / "home", with_rationale=True,
                                 faults=(Fault.parse("DROP_EVIDENCE_LINK"),))
        run_golden(pipeline)
        validates = pipeline.ledger.activities("validate")
        outcomes = [a.attr("outcome") for a in validates]
        assert outcomes == ["invalid", "valid"]


class TestGating:
    def test_persisted_package_revalidates(self, covered_pipeline):
        outcome = run_golden(covered_pipeline)
        package = outcome.package
        stored = parse_and_normalize(
            (covered_pipeline.graphs_dir / package.graph_id / "ag.json").read_bytes()
        )
        result = valid(stored, covered_pipeline.policy, covered_pipeline.store.snapshot(),
                       rebuild_prov_draft(covered_pipeline))
        assert result.valid

    def test_forged_report_for_other_graph_is_gating_violation(self, covered_pipeline, tmp_path):
        outcome = run_golden(covered_pipeline)
        package = outcome.package
        # a different, trivially valid graph
        other = parse_and_normalize(json.dumps({
            "nodes": [{"id": "c1", "kind": "Claim", "text": "x", "claim_class": "c",
                       "generator": "system"}],
            "edges": [],
        }))
        report = valid(other, covered_pipeline.policy, covered_pipeline.store.snapshot())
        # internal hook: call persist with a report computed for another graph
        with pytest.raises(GatingViolation):
            covered_pipeline.persist(
                package.graph, report, ProvenanceDraft(), None, None, None
            )

    def test_invalid_report_is_gating_violation(self, golden_pipeline):
        outcome = run_golden(golden_pipeline)
        entry = golden_pipeline.queue_entry(outcome.queue_ref)
        graph = parse_and_normalize(json.dumps(entry["document"]))
        from arggate.kernel import ValidationResult

        forged = ValidationResult(valid=False, violations=(), graph_hash="x" * 64,
                                  policy_fingerprint=golden_pipeline.policy_fp)
        with pytest.raises(GatingViolation):
            golden_pipeline.persist(graph, forged, ProvenanceDraft(), None, None, None)


class TestDeterminism:
    def test_two_runs_are_byte_identical(self, tmp_path):
        packages = []
        for name in ("one", "two"):
            pipeline = make_pipeline(tmp_path / name, with_rationale=True)
            outcome = run_golden(pipeline)
            assert outcome.status == "accepted"
            gid = outcome.package.graph_id
            root = pipeline.graphs_dir / gid
            packages.append({
                "graph_id": gid,
                "ag": (root / "ag.json").read_bytes(),
                "report": (root / "report.json").read_bytes(),
                "dot": (root / "gsn.dot").read_bytes(),
                "gsn": (root / "gsn.json").read_bytes(),
                "ledger": pipeline.ledger.path.read_bytes(),
            })
        assert packages[0] == packages[1]


class TestAuditQueries:
    def accepted_pipeline(self, golden_pipeline):
        outcome = run_golden(golden_pipeline)
        golden_pipeline.register_agent("reviewer-1", "human")
        return golden_pipeline.approve_assumption(
            outcome.queue_ref, "a-case-2219-evidence-set-complete", "reviewer-1"
        )

    def test_evidence_for_substantive_criteria(self, golden_pipeline):
        self.accepted_pipeline(golden_pipeline)
        audit = golden_pipeline.audit.audit_evidence_for_claim(
            "c-case-2219-substantive_criteria"
        )
        from conftest import seed_store
        from arggate.evidence import EvidenceStore
        from arggate.clock import FixedClock

        expected = {
            golden_pipeline.store.lookup(h).hash for h in audit.evidence
        }
        assert len(audit.evidence) == 2
        assert audit.assumptions == ()
        assert expected == set(audit.evidence)

    def test_assumption_backed_claim_lists_assumption(self, golden_pipeline):
        self.accepted_pipeline(golden_pipeline)
        audit = golden_pipeline.audit.audit_evidence_for_claim(
            "c-case-2219-rationale_documented"
        )
        assert audit.evidence == ()
        assert audit.assumptions == ("a-case-2219-evidence-set-complete",)

    def test_unknown_claim(self, golden_pipeline):
        self.accepted_pipeline(golden_pipeline)
        with pytest.raises(AuditError) as err:
            golden_pipeline.audit.audit_evidence_for_claim("c-nope")
        assert err.value.code == "UnknownClaim"

    def test_generation_context_matches_reference_meta(self, golden_pipeline):
        outcome = self.accepted_pipeline(golden_pipeline)
        ctx = golden_pipeline.audit.audit_generation_context(
            "c-case-2219-eligibility_decision"
        )
        assert ctx["model_id"] == "reference-drafter"
        assert ctx["model_version"] == "1.0"
        assert ctx["prompt_template_id"] == "draft-argument"
        assert ctx["prompt_template_version"] == "1"
        assert ctx["retrieval_set_id"] == outcome.package.retrieval_set_id

    def test_generation_context_on_human_node_rejected(self, covered_pipeline):
        run_golden(covered_pipeline)
        # a persisted graph whose single claim was human-authored
        doc = {
            "nodes": [{"id": "c-hand-written", "kind": "Claim", "text": "manual",
                       "claim_class": "manual_note", "generator": "human"}],
            "edges": [],
        }
        target = covered_pipeline.graphs_dir / ("h" * 64)
        target.mkdir()
        (target / "ag.json").write_text(json.dumps(doc))
        with pytest.raises(AuditError) as err:
            covered_pipeline.audit.audit_generation_context("c-hand-written")
        assert err.value.code == "NotAiGenerated"

    def test_untouched_graph_has_no_approvals(self, covered_pipeline):
        outcome = run_golden(covered_pipeline)
        assert covered_pipeline.audit.audit_approvals(outcome.package.graph_id) == []

    def test_override_recorded(self, covered_pipeline):
        outcome = run_golden(covered_pipeline)
        covered_pipeline.register_agent("reviewer-1", "human")
        gid = outcome.package.graph_id
        covered_pipeline.override(gid, "rejected", "manual review found an error",
                                  "reviewer-1")
        approvals = covered_pipeline.audit.audit_approvals(gid)
        assert [a["action"] for a in approvals] == ["override"]
        # the original graph is untouched; the disposition is appended
        stored = (covered_pipeline.graphs_dir / gid / "ag.json").read_bytes()
        assert parse_and_normalize(stored).structurally_equal(outcome.package.graph)
        overrides = (covered_pipeline.graphs_dir / gid / "overrides.ndjson").read_text()
        assert "manual review found an error" in overrides

    def test_annotation_recorded_as_edit(self, covered_pipeline):
        outcome = run_golden(covered_pipeline)
        covered_pipeline.register_agent("reviewer-1", "human")
        gid = outcome.package.graph_id
        covered_pipeline.annotate("c-case-2219-substantive_criteria", "checked by hand",
                                  "reviewer-1")
        approvals = covered_pipeline.audit.audit_approvals(gid)
        assert [a["action"] for a in approvals] == ["edit"]


class TestRerunAndFailures:
    def test_rerun_after_evidence_added(self, golden_pipeline):
        outcome = run_golden(golden_pipeline)
        assert outcome.status == "escalated"
        golden_pipeline.store.ingest(
            fixture_bytes("evidence_e3_rationale.txt"), "records", "case_records",
            title="Decision rationale memo", ledger=golden_pipeline.ledger,
        )
        rerun = golden_pipeline.rerun("case-2219")
        assert rerun.status == "accepted"
        assert not golden_pipeline.queue_entries()

    def test_unknown_case_rerun(self, golden_pipeline):
        with pytest.raises(PipelineError) as err:
            golden_pipeline.rerun("case-unknown")
        assert err.value.code == "UnknownCase"

    def test_bad_case_document_fails(self, golden_pipeline):
        outcome = golden_pipeline.run_case(b"{[not json")
        assert outcome.status == "failed"

    def test_unknown_decision_class_fails(self, golden_pipeline):
        doc = json.loads(fixture_bytes("benefits_case.json"))
        doc["decision_class"] = "asylum_decision"
        outcome = golden_pipeline.run_case(json.dumps(doc))
        assert outcome.status == "failed"
        assert "asylum_decision" in outcome.error
