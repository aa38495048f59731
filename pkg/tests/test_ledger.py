from __future__ import annotations

import json
import random

import pytest

from arggate.canonical import ZERO_HASH
from arggate.clock import FixedClock
from arggate.ledger import (
    ChainCorrupt,
    Ledger,
    ProvActivity,
    ProvAgent,
    ProvEntity,
    relation_payload,
)


@pytest.fixture
def ledger(tmp_path):
    return Ledger(tmp_path / "ledger" / "prov.ndjson", clock=FixedClock(), durable=False)


def fill(ledger, n):
    for i in range(n):
        ledger.append({"record_kind": "entity", "id": f"ent-{i:03d}",
                       "kind": "ag_node", "content_hash": f"{i:064x}",
                       "attributes": {"n": str(i)}})


class TestChain:
    def test_genesis_entry(self, ledger):
        entry = ledger.append({"record_kind": "agent", "id": "a", "kind": "human",
                               "display": "a"})
        assert entry.seq == 0
        assert entry.prev_hash == ZERO_HASH

    def test_chain_linkage(self, ledger):
        fill(ledger, 2)
        entries = ledger.entries()
        assert entries[1].prev_hash == entries[0].entry_hash

    def test_hundred_random_appends_verify(self, ledger):
        rng = random.Random(3)
        for i in range(100):
            ledger.append({"record_kind": "entity", "id": f"e{i}",
                           "kind": "ag_node", "content_hash": f"{rng.getrandbits(256):064x}",
                           "attributes": {}})
        assert ledger.verify_chain() is None

    def test_reload_continues_chain(self, tmp_path):
        path = tmp_path / "ledger" / "prov.ndjson"
        first = Ledger(path, clock=FixedClock(), durable=False)
        fill(first, 3)
        second = Ledger(path, clock=FixedClock("2026-02-01T00:00:00Z"), durable=False)
        assert len(second) == 3
        entry = second.append({"record_kind": "agent", "id": "x", "kind": "human",
                               "display": ""})
        assert entry.seq == 3
        assert second.verify_chain() is None

    def test_tampered_payload_byte_reports_that_seq(self, tmp_path):
        path = tmp_path / "ledger" / "prov.ndjson"
        ledger = Ledger(path, clock=FixedClock(), durable=False)
        fill(ledger, 10)
        raw = path.read_bytes()
        lines = raw.split(b"\n")
        line = bytearray(lines[5])
        flip_at = line.index(b"ag_node"[0], line.find(b'"kind"'))
        line[flip_at] ^= 0x01
        lines[5] = bytes(line)
        path.write_bytes(b"\n".join(lines))
        assert Ledger(path).verify_chain() == 5

    def test_every_byte_of_one_entry_is_covered(self, tmp_path):
        path = tmp_path / "ledger" / "prov.ndjson"
        ledger = Ledger(path, clock=FixedClock(), durable=False)
        fill(ledger, 8)
        original = path.read_bytes()
        lines = original.split(b"\n")
        target = 4
        for pos in range(len(lines[target])):
            mutated = bytearray(lines[target])
            mutated[pos] ^= 0x01
            tampered = lines[:target] + [bytes(mutated)] + lines[target + 1:]
            path.write_bytes(b"\n".join(tampered))
            assert Ledger(path).verify_chain() == target, f"byte {pos} undetected"
        path.write_bytes(original)
        assert Ledger(path).verify_chain() is None

    def test_corrupt_chain_refuses_append(self, tmp_path):
        path = tmp_path / "ledger" / "prov.ndjson"
        ledger = Ledger(path, clock=FixedClock(), durable=False)
        fill(ledger, 3)
        raw = path.read_bytes().replace(b"ent-001", b"ent-xxx")
        path.write_bytes(raw)
        reloaded = Ledger(path)
        with pytest.raises(ChainCorrupt):
            reloaded.append({"record_kind": "agent", "id": "z", "kind": "human",
                             "display": ""})

    def test_truncation_is_not_detected(self, tmp_path):
        # Documented semantics: removing the tail leaves a valid chain;
        # anchor the head hash externally.
        path = tmp_path / "ledger" / "prov.ndjson"
        ledger = Ledger(path, clock=FixedClock(), durable=False)
        fill(ledger, 5)
        lines = path.read_bytes().split(b"\n")
        path.write_bytes(b"\n".join(lines[:-2]) + b"\n")
        assert Ledger(path).verify_chain() is None

    def test_head_hash_tracks_last_entry(self, ledger):
        assert ledger.head_hash == ZERO_HASH
        fill(ledger, 2)
        assert ledger.head_hash == ledger.entries()[-1].entry_hash


class TestTypedRecords:
    def test_record_activity_emits_relations(self, ledger):
        ledger.record_entity(ProvEntity(id="ent-a", kind="ag_graph", content_hash="0" * 64))
        ledger.record_agent(ProvAgent(id="agent-m", kind="model"))
        ledger.record_activity(ProvActivity(
            id="act-1", kind="draft", started="t", ended="t", agent="agent-m",
            used=("ent-a",), generated=(),
        ))
        kinds = [e.payload["record_kind"] for e in ledger.entries()]
        assert kinds == ["entity", "agent", "activity", "relation", "relation"]
        relations = {e.payload["relation"] for e in ledger.entries()
                     if e.payload["record_kind"] == "relation"}
        assert relations == {"wasAssociatedWith", "used"}

    def test_ensure_agent_is_idempotent(self, ledger):
        agent = ProvAgent(id="reviewer-1", kind="human", display="Reviewer")
        ledger.ensure_agent(agent)
        ledger.ensure_agent(agent)
        agents = [e for e in ledger.entries() if e.payload["record_kind"] == "agent"]
        assert len(agents) == 1

    def test_unknown_relation_rejected(self):
        with pytest.raises(ValueError):
            relation_payload("wasFabricatedBy", "a", "b")

    def test_prov_json_export_shape(self, ledger):
        ledger.record_entity(ProvEntity(id="ent-a", kind="evidence_item", content_hash="0" * 64))
        ledger.record_agent(ProvAgent(id="agent-h", kind="human", display="H"))
        ledger.record_activity(ProvActivity(
            id="act-1", kind="validate", started="t0", ended="t1", agent="agent-h",
            used=("ent-a",), attributes=(("outcome", "valid"),),
        ))
        ledger.append(relation_payload("wasAttributedTo", "ent-a", "agent-h"))
        doc = ledger.to_prov_json()
        assert doc["entity"]["ent-a"]["prov:type"] == "evidence_item"
        assert doc["agent"]["agent-h"]["prov:type"] == "human"
        assert doc["activity"]["act-1"]["outcome"] == "valid"
        assert any(r["prov:agent"] == "agent-h" for r in doc["wasAssociatedWith"].values())
        assert any(r["prov:entity"] == "ent-a" for r in doc["used"].values())
        assert any(r["prov:agent"] == "agent-h" for r in doc["wasAttributedTo"].values())
