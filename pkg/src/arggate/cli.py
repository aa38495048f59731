"""Operator command line.

Machine-readable artifacts go to stdout, diagnostics to stderr.  Exit
codes: 0 ok/valid, 1 invalid, 2 usage or parse error, 3 escalated,
4 infrastructure failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .canonical import canonical_bytes
from .casekg import CaseError
from .clock import FixedClock, SystemClock
from .drafter import DraftError, Fault
from .evidence import EmptyContent, EvidenceStore, IntegrityError, StoreUnavailable
from .kernel import valid
from .ledger import AuditError, AuditIndex, Ledger
from .model import ParseError, export_gsn, parse_and_normalize
from .pipeline import (
    Pipeline,
    PipelineConfig,
    PipelineError,
    STATUS_ACCEPTED,
    STATUS_ESCALATED,
)
from .policy import PolicyError, load_policy

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_ESCALATED = 3
EXIT_FAILURE = 4

DEFAULT_HOME = "./arggate-data"


def _home(args) -> Path:
    return Path(args.home or os.environ.get("ARGGATE_HOME") or DEFAULT_HOME)


def _emit(obj) -> None:
    sys.stdout.write(canonical_bytes(obj).decode("utf-8") + "\n")


def _diag(message: str) -> None:
    sys.stderr.write(message.rstrip() + "\n")


def _clock(args):
    return FixedClock() if getattr(args, "fixed_clock", False) else SystemClock()


def _pipeline(args, faults=(), drafter="reference", endpoint_url="") -> Pipeline:
    config = PipelineConfig.from_paths(
        args.policy,
        _home(args),
        faults=tuple(faults),
        drafter=drafter,
        endpoint_url=endpoint_url,
        clock=_clock(args),
    )
    return Pipeline(config)


def cmd_run(args) -> int:
    try:
        faults = tuple(Fault.parse(spec) for spec in args.fault or [])
        pipeline = _pipeline(
            args,
            faults=faults,
            drafter=args.drafter,
            endpoint_url=args.endpoint_url or "",
        )
        case_doc = Path(args.case).read_bytes()
        outcome = pipeline.run_case(case_doc)
    except (PolicyError, DraftError) as exc:
        _diag(str(exc))
        return EXIT_USAGE
    except (OSError, PipelineError) as exc:
        _diag(str(exc))
        return EXIT_FAILURE
    _emit(outcome.to_obj())
    if outcome.status == STATUS_ACCEPTED:
        package = outcome.package
        out_dir = Path(args.out) / package.graph_id
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ag.json").write_bytes(package.document)
        (out_dir / "report.json").write_bytes(package.report.to_bytes())
        (out_dir / "gsn.dot").write_bytes(package.gsn_dot)
        (out_dir / "gsn.json").write_bytes(package.gsn_json)
        (out_dir / "summary.txt").write_text(package.summary, encoding="utf-8")
        (out_dir / "package.json").write_bytes(canonical_bytes(package.to_obj()))
        _diag(f"decision package written to {out_dir}")
        return EXIT_OK
    if outcome.status == STATUS_ESCALATED:
        _diag(f"escalated to human queue after {outcome.rounds_used} round(s)")
        return EXIT_ESCALATED
    _diag(outcome.error or "pipeline failure")
    return EXIT_FAILURE


def cmd_validate(args) -> int:
    try:
        policy = load_policy(Path(args.policy).read_bytes())
        graph = parse_and_normalize(Path(args.graph).read_bytes())
        store = EvidenceStore(_home(args) / "store")
        result = valid(graph, policy, store.snapshot())
    except (ParseError, PolicyError) as exc:
        _diag(str(exc))
        return EXIT_USAGE
    except (OSError, StoreUnavailable, IntegrityError) as exc:
        _diag(str(exc))
        return EXIT_FAILURE
    _emit(result.to_obj())
    return EXIT_OK if result.valid else EXIT_INVALID


def cmd_evidence_ingest(args) -> int:
    try:
        store = EvidenceStore(_home(args) / "store", clock=_clock(args))
        ledger = Ledger(_home(args) / "ledger" / "prov.ndjson", clock=_clock(args))
        item = store.ingest(
            Path(args.file).read_bytes(),
            corpus_id=args.corpus,
            source_class=getattr(args, "source_class"),
            title=args.title or Path(args.file).name,
            agent=args.agent,
            ledger=ledger,
        )
    except (OSError, EmptyContent, StoreUnavailable, IntegrityError) as exc:
        _diag(str(exc))
        return EXIT_FAILURE
    _emit({"hash": item.hash, "corpus_id": item.corpus_id, "source_class": item.source_class})
    return EXIT_OK


def cmd_ledger_verify(args) -> int:
    ledger = Ledger(_home(args) / "ledger" / "prov.ndjson")
    bad_seq = ledger.verify_chain()
    if bad_seq is None:
        _emit({"ok": True, "entries": len(ledger), "head_hash": ledger.head_hash})
        return EXIT_OK
    _emit({"ok": False, "first_bad_seq": bad_seq})
    return EXIT_INVALID


def cmd_audit(args) -> int:
    ledger = Ledger(_home(args) / "ledger" / "prov.ndjson")
    index = AuditIndex(ledger, _home(args) / "graphs")
    try:
        if args.query == "evidence-for-claim":
            _emit(index.audit_evidence_for_claim(args.id).to_obj())
        elif args.query == "generation-context":
            _emit(index.audit_generation_context(args.id))
        else:
            _emit(index.audit_approvals(args.id))
    except AuditError as exc:
        _diag(str(exc.message))
        return EXIT_INVALID
    return EXIT_OK


def cmd_export(args) -> int:
    if args.format == "prov-json":
        ledger = Ledger(_home(args) / "ledger" / "prov.ndjson")
        sys.stdout.write(canonical_bytes(ledger.to_prov_json()).decode("utf-8") + "\n")
        return EXIT_OK
    if not args.graph:
        _diag("--graph is required for GSN exports")
        return EXIT_USAGE
    name = {"gsn-dot": "gsn.dot", "gsn-json": "gsn.json"}[args.format]
    path = _home(args) / "graphs" / args.graph / name
    if not path.exists():
        _diag(f"no persisted graph {args.graph}")
        return EXIT_INVALID
    sys.stdout.buffer.write(path.read_bytes())
    return EXIT_OK


def cmd_approve(args) -> int:
    try:
        pipeline = _pipeline(args)
        outcome = pipeline.approve_assumption(args.queue_ref, args.assumption, args.agent)
    except PipelineError as exc:
        _diag(str(exc))
        return EXIT_FAILURE
    except PolicyError as exc:
        _diag(str(exc))
        return EXIT_USAGE
    _emit(outcome.to_obj())
    return EXIT_OK if outcome.status == STATUS_ACCEPTED else EXIT_ESCALATED


def cmd_agent_register(args) -> int:
    ledger = Ledger(_home(args) / "ledger" / "prov.ndjson", clock=_clock(args))
    from .ledger import ProvAgent

    ledger.ensure_agent(ProvAgent(id=args.id, kind=args.kind, display=args.display or args.id))
    _emit({"registered": args.id, "kind": args.kind})
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app, load_tokens

    tokens = load_tokens(Path(args.tokens)) if args.tokens else {}
    app = build_app(home=_home(args), policy_path=Path(args.policy), tokens=tokens)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arggate",
        description="Evidence-gated argument graphs with deterministic validation",
    )
    parser.add_argument("--home", help=f"data root (default $ARGGATE_HOME or {DEFAULT_HOME})")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a case through the full pipeline")
    p_run.add_argument("--case", required=True)
    p_run.add_argument("--policy", required=True)
    p_run.add_argument("--drafter", choices=["reference", "endpoint"], default="reference")
    p_run.add_argument("--endpoint-url", default="")
    p_run.add_argument("--fault", action="append",
                       help="inject a drafter fault (test mode), repeatable")
    p_run.add_argument("--out", default="./out", help="decision package output directory")
    p_run.add_argument("--fixed-clock", action="store_true",
                       help="deterministic timestamps, for reproducible runs")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="validate an argument document against a policy")
    p_val.add_argument("graph")
    p_val.add_argument("--policy", required=True)
    p_val.set_defaults(func=cmd_validate)

    p_ev = sub.add_parser("evidence", help="evidence store operations")
    ev_sub = p_ev.add_subparsers(dest="evidence_command", required=True)
    p_ing = ev_sub.add_parser("ingest", help="ingest one evidence file")
    p_ing.add_argument("file")
    p_ing.add_argument("--class", dest="source_class", required=True)
    p_ing.add_argument("--corpus", required=True)
    p_ing.add_argument("--title", default="")
    p_ing.add_argument("--agent", default="system")
    p_ing.add_argument("--fixed-clock", action="store_true")
    p_ing.set_defaults(func=cmd_evidence_ingest)

    p_led = sub.add_parser("ledger", help="provenance ledger operations")
    led_sub = p_led.add_subparsers(dest="ledger_command", required=True)
    p_ver = led_sub.add_parser("verify", help="verify the hash chain, print the head hash")
    p_ver.set_defaults(func=cmd_ledger_verify)

    p_aud = sub.add_parser("audit", help="audit reconstruction queries")
    p_aud.add_argument("query", choices=["evidence-for-claim", "generation-context", "approvals"])
    p_aud.add_argument("id")
    p_aud.set_defaults(func=cmd_audit)

    p_exp = sub.add_parser("export", help="export artifacts")
    p_exp.add_argument("--format", choices=["gsn-dot", "gsn-json", "prov-json"], required=True)
    p_exp.add_argument("--graph", default="")
    p_exp.set_defaults(func=cmd_export)

    p_app = sub.add_parser("approve", help="approve a pending assumption on an escalated graph")
    p_app.add_argument("--queue-ref", required=True)
    p_app.add_argument("--assumption", required=True)
    p_app.add_argument("--agent", required=True)
    p_app.add_argument("--policy", required=True)
    p_app.add_argument("--fixed-clock", action="store_true")
    p_app.set_defaults(func=cmd_approve)

    p_agent = sub.add_parser("agent", help="agent registry")
    agent_sub = p_agent.add_subparsers(dest="agent_command", required=True)
    p_reg = agent_sub.add_parser("register")
    p_reg.add_argument("--id", required=True)
    p_reg.add_argument("--kind", choices=["human", "model", "software"], required=True)
    p_reg.add_argument("--display", default="")
    p_reg.add_argument("--fixed-clock", action="store_true")
    p_reg.set_defaults(func=cmd_agent_register)

    p_srv = sub.add_parser("serve", help="run the oversight HTTP service")
    p_srv.add_argument("--port", type=int, default=8080)
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--policy", required=True)
    p_srv.add_argument("--tokens", default="", help="JSON file mapping bearer tokens to agents")
    p_srv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())
