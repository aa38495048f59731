from __future__ import annotations

import json
from pathlib import Path

import pytest

from arggate.casekg import build_case_knowledge_graph
from arggate.clock import FixedClock
from arggate.drafter import Fault, request_from_policy
from arggate.evidence import EvidenceStore, retrieve_evidence
from arggate.pipeline import Pipeline, PipelineConfig
from arggate.policy import load_policy, policy_fingerprint

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "arggate" / "fixtures"

GOLDEN_ITEMS = (
    # (file, corpus, source class, title)
    ("evidence_e1_policy.txt", "statutes", "statute", "Benefits policy excerpt"),
    ("evidence_e2_record.txt", "records", "case_records", "Case record 2219"),
    ("evidence_e7_identity.txt", "records", "case_records", "Identity verification report"),
)
RATIONALE_ITEM = (
    "evidence_e3_rationale.txt", "records", "case_records", "Decision rationale memo"
)


def fixture_bytes(name: str) -> bytes:
    return (FIXTURES / name).read_bytes()


def seed_store(store: EvidenceStore, with_rationale: bool, ledger=None) -> dict[str, str]:
    """Ingest the packaged corpus; returns file stem -> item hash."""
    hashes = {}
    items = GOLDEN_ITEMS + ((RATIONALE_ITEM,) if with_rationale else ())
    for name, corpus, source_class, title in items:
        item = store.ingest(
            fixture_bytes(name), corpus_id=corpus, source_class=source_class,
            title=title, ledger=ledger,
        )
        hashes[name.split(".")[0]] = item.hash
    return hashes


def make_pipeline(
    home: Path,
    *,
    faults: tuple[Fault, ...] = (),
    with_rationale: bool = False,
    clock=None,
    drafter: str = "reference",
    endpoint_url: str = "",
    seed: bool = True,
) -> Pipeline:
    policy = load_policy(fixture_bytes("benefits.policy.json"))
    pipeline = Pipeline(
        PipelineConfig(
            policy=policy,
            home=home,
            faults=faults,
            clock=clock or FixedClock(),
            drafter=drafter,
            endpoint_url=endpoint_url,
            durable_ledger=False,
        )
    )
    if seed:
        seed_store(pipeline.store, with_rationale, ledger=pipeline.ledger)
    return pipeline


@pytest.fixture
def golden_policy():
    return load_policy(fixture_bytes("benefits.policy.json"))


@pytest.fixture
def golden_case_doc():
    return fixture_bytes("benefits_case.json")


@pytest.fixture
def fixed_clock():
    return FixedClock()


@pytest.fixture
def golden_pipeline(tmp_path):
    """Pipeline over the packaged corpus without the rationale memo: the
    reference draft carries one pending assumption."""
    return make_pipeline(tmp_path / "home")


@pytest.fixture
def covered_pipeline(tmp_path):
    """Pipeline over the full corpus: the fault-free draft validates in
    round one."""
    return make_pipeline(tmp_path / "home", with_rationale=True)


def golden_draft_graph(tmp_path, with_rationale: bool = False):
    """Parse the reference drafter's round-1 output for the packaged case,
    together with the surrounding context objects."""
    from arggate.model import parse_and_normalize
    from arggate.drafter import ReferenceDrafter

    clock = FixedClock()
    store = EvidenceStore(tmp_path / "store-tmp", clock=clock)
    hashes = seed_store(store, with_rationale)
    policy = load_policy(fixture_bytes("benefits.policy.json"))
    kg = build_case_knowledge_graph(fixture_bytes("benefits_case.json"))
    snapshot = store.snapshot()
    retrieval = retrieve_evidence(snapshot, kg, policy)
    req = request_from_policy(
        case_id=kg.case_id,
        decision_class=kg.decision_class,
        kg_hash=kg.hash,
        retrieval=retrieval,
        snapshot=snapshot,
        policy=policy,
        policy_fp=policy_fingerprint(policy),
    )
    doc = ReferenceDrafter().draft(req)
    graph = parse_and_normalize(doc.content)
    return {
        "graph": graph,
        "doc": doc,
        "req": req,
        "kg": kg,
        "retrieval": retrieval,
        "snapshot": snapshot,
        "policy": policy,
        "store": store,
        "hashes": hashes,
    }
