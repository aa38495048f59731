"""Oversight HTTP facade.

Read endpoints return exactly the canonical artifacts the CLI writes;
write endpoints (approve, annotate, override, rerun) map 1:1 onto
pipeline operations and are ledgered under the session's human agent.
Sessions are bearer tokens with a role: reviewers may act, auditors may
only read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from pydantic import BaseModel

from .canonical import canonical_bytes
from .clock import SystemClock
from .kernel import valid
from .ledger import AuditError
from .pipeline import Pipeline, PipelineConfig, PipelineError, STATUS_ACCEPTED
from .policy import load_policy


@dataclass(frozen=True)
class ApiSession:
    agent_id: str
    role: str  # reviewer | auditor


def load_tokens(path: Path) -> dict[str, ApiSession]:
    raw = json.loads(path.read_text(encoding="utf-8"))
    return {
        token: ApiSession(agent_id=entry["agent_id"], role=entry["role"])
        for token, entry in raw.items()
    }


class AnnotateBody(BaseModel):
    text: str


class OverrideBody(BaseModel):
    disposition: str
    rationale: str = ""


def _canonical_response(payload: Any) -> Response:
    body = payload if isinstance(payload, (bytes, bytearray)) else canonical_bytes(payload)
    return Response(content=bytes(body), media_type="application/json")


_PIPELINE_HTTP_STATUS = {
    "UnknownAssumption": 404,
    "UnknownGraph": 404,
    "UnknownNode": 404,
    "UnknownCase": 404,
    "AlreadyApproved": 409,
    "NotHumanAgent": 403,
    "GatingViolation": 422,
    "MissingRationale": 400,
    "CaseLocked": 409,
}


def build_app(
    home: Path,
    policy_path: Path | None = None,
    policy=None,
    tokens: dict[str, ApiSession] | None = None,
    clock=None,
) -> FastAPI:
    if policy is None:
        if policy_path is None:
            raise ValueError("build_app needs a policy or a policy path")
        policy = load_policy(Path(policy_path).read_bytes())
    tokens = tokens or {}
    clock = clock or SystemClock()
    pipeline = Pipeline(PipelineConfig(policy=policy, home=Path(home), clock=clock))
    for session in tokens.values():
        pipeline.register_agent(session.agent_id, "human", session.agent_id)

    app = FastAPI(title="arggate oversight service", docs_url=None, redoc_url=None)
    app.state.pipeline = pipeline

    def session_from(request: Request) -> ApiSession:
        header = request.headers.get("authorization", "")
        if not header.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        session = tokens.get(header[len("Bearer "):])
        if session is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return session

    def reviewer_from(request: Request) -> ApiSession:
        session = session_from(request)
        if session.role != "reviewer":
            raise HTTPException(status_code=403, detail="reviewer role required")
        return session

    def _pipeline_call(fn, *args):
        try:
            return fn(*args)
        except PipelineError as exc:
            raise HTTPException(
                status_code=_PIPELINE_HTTP_STATUS.get(exc.code, 400), detail=exc.message
            )
        except AuditError as exc:
            raise HTTPException(status_code=404, detail=exc.message)

    def _graph_file(graph_id: str, name: str) -> bytes:
        path = pipeline.graphs_dir / graph_id / name
        if path.exists():
            return path.read_bytes()
        raise HTTPException(status_code=404, detail=f"no persisted graph {graph_id}")

    def _queued(graph_id: str) -> dict | None:
        path = pipeline.queue_dir / f"{graph_id}.json"
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        return None

    # -- read endpoints ------------------------------------------------------

    @app.get("/api/graphs")
    def list_graphs(request: Request):
        session_from(request)
        persisted = sorted(
            p.name for p in pipeline.graphs_dir.iterdir() if (p / "ag.json").exists()
        )
        queued = [e["candidate_hash"] for e in pipeline.queue_entries()]
        return _canonical_response(
            {
                "persisted": persisted,
                "queued": sorted(queued),
            }
        )

    @app.get("/api/graphs/{graph_id}")
    def get_graph(graph_id: str, request: Request):
        session_from(request)
        entry = _queued(graph_id)
        if entry is not None:
            return _canonical_response(entry["document"])
        return _canonical_response(_graph_file(graph_id, "ag.json"))

    @app.get("/api/graphs/{graph_id}/violations")
    def get_violations(graph_id: str, request: Request):
        session_from(request)
        entry = _queued(graph_id)
        if entry is not None:
            return _canonical_response(entry["report"])
        return _canonical_response(_graph_file(graph_id, "report.json"))

    @app.get("/api/graphs/{graph_id}/gsn")
    def get_gsn(graph_id: str, request: Request, format: str = "dot"):
        session_from(request)
        if format not in ("dot", "gsn-json"):
            raise HTTPException(status_code=400, detail="format must be dot or gsn-json")
        entry = _queued(graph_id)
        if entry is not None:
            from .model import export_gsn, parse_and_normalize

            graph = parse_and_normalize(canonical_bytes(entry["document"]))
            payload = export_gsn(graph.with_id(graph_id), format)
            media = "text/vnd.graphviz" if format == "dot" else "application/json"
            return Response(content=payload, media_type=media)
        name = "gsn.dot" if format == "dot" else "gsn.json"
        payload = _graph_file(graph_id, name)
        media = "text/vnd.graphviz" if format == "dot" else "application/json"
        return Response(content=payload, media_type=media)

    @app.get("/api/evidence/{item_hash}")
    def get_evidence(item_hash: str, request: Request):
        session_from(request)
        item = pipeline.store.lookup(item_hash)
        if item is None:
            raise HTTPException(status_code=404, detail=f"no evidence {item_hash}")
        return _canonical_response(item.to_obj())

    @app.get("/api/audit/evidence-for-claim/{claim_id}")
    def audit_evidence(claim_id: str, request: Request):
        session_from(request)
        return _canonical_response(
            _pipeline_call(pipeline.audit.audit_evidence_for_claim, claim_id).to_obj()
        )

    @app.get("/api/audit/generation-context/{node_id}")
    def audit_generation(node_id: str, request: Request):
        session_from(request)
        return _canonical_response(
            _pipeline_call(pipeline.audit.audit_generation_context, node_id)
        )

    @app.get("/api/audit/approvals/{graph_id}")
    def audit_approvals(graph_id: str, request: Request):
        session_from(request)
        return _canonical_response(_pipeline_call(pipeline.audit.audit_approvals, graph_id))

    @app.get("/api/queue")
    def get_queue(request: Request):
        session_from(request)
        entries = [
            {
                "candidate_hash": e["candidate_hash"],
                "case_id": e["case_id"],
                "rounds_used": e.get("rounds_used", 0),
                "report": e["report"],
                "created_at": e.get("created_at", ""),
            }
            for e in pipeline.queue_entries()
        ]
        return _canonical_response({"entries": entries})

    # -- write endpoints -----------------------------------------------------

    @app.post("/api/assumptions/{assumption_id}/approve")
    def approve(assumption_id: str, request: Request):
        session = reviewer_from(request)
        entry = pipeline.find_queued_assumption(assumption_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"no queued assumption {assumption_id}")
        outcome = _pipeline_call(
            pipeline.approve_assumption,
            entry["candidate_hash"],
            assumption_id,
            session.agent_id,
        )
        return _canonical_response(outcome.to_obj())

    @app.post("/api/nodes/{node_id}/annotate")
    def annotate(node_id: str, body: AnnotateBody, request: Request):
        session = reviewer_from(request)
        if not body.text:
            raise HTTPException(status_code=400, detail="annotation text required")
        _pipeline_call(pipeline.annotate, node_id, body.text, session.agent_id)
        return _canonical_response({"annotated": node_id})

    @app.post("/api/graphs/{graph_id}/override")
    def override(graph_id: str, body: OverrideBody, request: Request):
        session = reviewer_from(request)
        if not body.rationale:
            raise HTTPException(status_code=400, detail="override requires a rationale")
        record = _pipeline_call(
            pipeline.override, graph_id, body.disposition, body.rationale, session.agent_id
        )
        return _canonical_response(record)

    @app.post("/api/cases/{case_id}/rerun")
    def rerun(case_id: str, request: Request):
        reviewer_from(request)
        outcome = _pipeline_call(pipeline.rerun, case_id)
        return _canonical_response(outcome.to_obj())

    return app
