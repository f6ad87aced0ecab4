"""Operator-facing HTTP service: create and observe campaigns, stream their
events live with reconnect-and-resume, gate assisted-mode approvals, and fetch
finished transcripts.

Each campaign loop runs on its own thread and owns its state exclusively; the
service only talks to it through the approval mailbox, the cancel flag, and
the observed event list.
"""

from __future__ import annotations

import json
import queue
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .controller import (
    ApprovalDecision,
    ApprovalVerdict,
    OperatingMode,
    RunDeps,
    run_campaign,
)
from .executors import SimExecutor
from .gateway import ScriptedGateway, load_script
from .model import (
    ActionBlock,
    CampaignConfig,
    CampaignState,
    ConfigurationError,
    new_campaign,
)
from .netsim import ScenarioError, builtin_network, load_network
from .parsers import detect_placeholders
from .prompts import PromptEngine
from .transcript import Event, LogicalClock, Transcript

STREAM_POLL_S = 0.2


class CreateCampaignRequest(BaseModel):
    scenario: str = "single-vsftpd-2.3.4"
    script: str = "demo"
    seed: int = 0
    mode: str = OperatingMode.AUTONOMOUS.value
    config: dict = Field(default_factory=dict)


class DecisionRequest(BaseModel):
    step_index: int
    verdict: str
    replacement_commands: Optional[list[str]] = None
    manual_command: Optional[str] = None


class CampaignHandle:
    """Server-side bookkeeping for one campaign thread."""

    def __init__(self, campaign_id: str, mode: OperatingMode, state: CampaignState):
        self.campaign_id = campaign_id
        self.mode = mode
        self.state = state
        self.cond = threading.Condition()
        self.events: list[Event] = []
        self.pending: Optional[dict] = None
        self.mailbox: "queue.Queue[ApprovalDecision]" = queue.Queue(maxsize=1)
        self.cancel = threading.Event()
        self.finished = False
        self.error: Optional[str] = None
        self.transcript: Optional[Transcript] = None
        self.thread: Optional[threading.Thread] = None

    # -- callbacks used by the campaign thread ------------------------------

    def on_event(self, event: Event) -> None:
        with self.cond:
            self.events.append(event)
            self.cond.notify_all()

    def approver(self, state: CampaignState, step_index: int, block: ActionBlock) -> ApprovalDecision:
        with self.cond:
            self.pending = {"step_index": step_index, "action": block.to_dict()}
            self.cond.notify_all()
        try:
            decision = self.mailbox.get(timeout=state.config.approval_timeout_s)
        except queue.Empty:
            decision = ApprovalDecision(ApprovalVerdict.DENY)
        with self.cond:
            self.pending = None
            self.cond.notify_all()
        return decision

    def snapshot(self) -> dict:
        with self.cond:
            state = self.state
            return {
                "campaign_id": self.campaign_id,
                "mode": self.mode.value,
                "running": not self.finished,
                "stop_reason": state.terminated.value if state.terminated else None,
                "tactic": state.tactic.value,
                "stage": state.stage.value,
                "steps": len(state.history),
                "total_actions": state.total_actions,
                "consecutive_failures": state.consecutive_failures,
                "pending_approval": self.pending,
                "error": self.error,
                "event_count": len(self.events),
            }


def _resolve_script(name: str, seed: int):
    from .cli import packaged_script_path

    return load_script(packaged_script_path(name), seed=seed)


def _resolve_network(name: str):
    if Path(name).exists():
        return load_network(name)
    return builtin_network(name)


def create_app(static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="campaign operator service")
    registry: dict[str, CampaignHandle] = {}
    registry_lock = threading.Lock()
    counter = {"n": 0}

    def get_handle(campaign_id: str) -> CampaignHandle:
        with registry_lock:
            handle = registry.get(campaign_id)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"unknown campaign {campaign_id!r}")
        return handle

    @app.post("/campaigns", status_code=201)
    def create_campaign(req: CreateCampaignRequest) -> dict:
        try:
            mode = OperatingMode(req.mode)
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown mode {req.mode!r}")
        try:
            network = _resolve_network(req.scenario)
            script = _resolve_script(req.script, req.seed)
            target_ip = network.hosts[0].ip if network.hosts else "172.16.2.3"
            config_values = {"agent_ip": "172.16.2.2", "target_ip": target_ip, **req.config}
            config = CampaignConfig.from_dict(config_values)
            state = new_campaign(config)
        except (ConfigurationError, ScenarioError, ValueError, OSError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        with registry_lock:
            counter["n"] += 1
            campaign_id = f"c{counter['n']:04d}"
            handle = CampaignHandle(campaign_id, mode, state)
            registry[campaign_id] = handle
        deps = RunDeps(
            gateway=ScriptedGateway(script, seed=req.seed),
            executor=SimExecutor(network),
            engine=PromptEngine(),
            approver=handle.approver if mode is OperatingMode.ASSISTED else None,
            cancel_requested=handle.cancel.is_set,
        )

        def runner() -> None:
            try:
                handle.transcript = run_campaign(
                    state, deps, mode=mode, campaign_id=campaign_id,
                    clock=LogicalClock(), on_event=handle.on_event,
                )
            except Exception as exc:  # surfaced via the state endpoint
                handle.error = str(exc)
            finally:
                with handle.cond:
                    handle.finished = True
                    handle.cond.notify_all()

        handle.thread = threading.Thread(target=runner, name=campaign_id, daemon=True)
        handle.thread.start()
        return {"campaign_id": campaign_id, "mode": mode.value}

    @app.get("/campaigns")
    def list_campaigns() -> list[dict]:
        with registry_lock:
            handles = list(registry.values())
        return [h.snapshot() for h in handles]

    @app.get("/campaigns/{campaign_id}")
    def get_campaign(campaign_id: str) -> dict:
        return get_handle(campaign_id).snapshot()

    @app.get("/campaigns/{campaign_id}/events")
    def stream_events(campaign_id: str, request: Request, since: int = -1) -> StreamingResponse:
        handle = get_handle(campaign_id)
        last_id = request.headers.get("last-event-id")
        if last_id is not None:
            try:
                since = max(since, int(last_id))
            except ValueError:
                pass
        start = since + 1

        def generate():
            idx = start
            while True:
                with handle.cond:
                    while idx >= len(handle.events) and not handle.finished:
                        handle.cond.wait(timeout=STREAM_POLL_S)
                    batch = handle.events[idx:]
                    finished = handle.finished
                for event in batch:
                    data = json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":"))
                    yield f"id: {event.seq}\nevent: {event.kind.value}\ndata: {data}\n\n"
                    idx += 1
                if finished and idx >= len(handle.events):
                    yield "event: end\ndata: {}\n\n"
                    return

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.post("/campaigns/{campaign_id}/approval")
    def submit_decision(campaign_id: str, req: DecisionRequest) -> dict:
        handle = get_handle(campaign_id)
        try:
            verdict = ApprovalVerdict(req.verdict)
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown verdict {req.verdict!r}")
        replacement = None
        if verdict is ApprovalVerdict.EDIT:
            commands = [c for c in (req.replacement_commands or []) if c.strip()]
            if not commands:
                raise HTTPException(status_code=422, detail="edit needs replacement commands")
            replacement = ActionBlock(tuple(commands))
            spans = detect_placeholders(replacement)
            if spans:
                raise HTTPException(
                    status_code=422,
                    detail=f"replacement contains placeholders: {', '.join(spans)}",
                )
        if verdict is ApprovalVerdict.TAKE_OVER and not (req.manual_command or "").strip():
            raise HTTPException(status_code=422, detail="take_over needs a manual command")
        with handle.cond:
            pending = handle.pending
        if pending is None or pending["step_index"] != req.step_index:
            raise HTTPException(
                status_code=409,
                detail="no matching pending approval for that step",
            )
        decision = ApprovalDecision(verdict, replacement=replacement,
                                    manual_command=req.manual_command)
        try:
            handle.mailbox.put_nowait(decision)
        except queue.Full:
            raise HTTPException(status_code=409, detail="a decision is already queued")
        return {"accepted": True, "step_index": req.step_index, "verdict": verdict.value}

    @app.post("/campaigns/{campaign_id}/stop")
    def stop_campaign(campaign_id: str) -> dict:
        handle = get_handle(campaign_id)
        handle.cancel.set()
        # unblock a pending approval so the loop can observe the cancel flag
        with handle.cond:
            pending = handle.pending is not None
        if pending:
            try:
                handle.mailbox.put_nowait(ApprovalDecision(ApprovalVerdict.DENY))
            except queue.Full:
                pass
        return {"stopping": True}

    @app.get("/campaigns/{campaign_id}/transcript", response_class=PlainTextResponse)
    def get_transcript(campaign_id: str) -> str:
        handle = get_handle(campaign_id)
        with handle.cond:
            finished, transcript = handle.finished, handle.transcript
        if not finished or transcript is None:
            raise HTTPException(status_code=409, detail="campaign still running")
        return transcript.to_jsonl()

    @app.get("/campaigns/{campaign_id}/replay")
    def replay_campaign(campaign_id: str) -> dict:
        handle = get_handle(campaign_id)
        with handle.cond:
            finished, transcript = handle.finished, handle.transcript
        if not finished or transcript is None:
            raise HTTPException(status_code=409, detail="campaign still running")
        return {
            "campaign_id": transcript.campaign_id,
            "mode": transcript.mode,
            "stop_reason": transcript.stop_reason.value if transcript.stop_reason else None,
            "steps": [s.to_dict() for s in transcript.steps()],
        }

    @app.get("/transcripts")
    def list_transcripts() -> list[dict]:
        with registry_lock:
            handles = list(registry.values())
        return [
            {"campaign_id": h.campaign_id,
             "stop_reason": h.state.terminated.value if h.state.terminated else None}
            for h in handles
            if h.finished and h.transcript is not None
        ]

    if static_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = str(candidate) if candidate.is_dir() else None
    if static_dir and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="console")

    return app
