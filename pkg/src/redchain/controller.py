"""Finite-state prompt-chain loop: query the model, execute the action,
translate the output, select the next tactic, and enforce stop conditions.

One campaign is one sequential loop with exclusive ownership of its state.
Every step emits an ordered event stream for observers and the transcript.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional
from uuid import uuid4

from .executors import Executor, ExecutorError, ObserverExecutor
from .gateway import CompletionParams, GatewayError, ModelGateway
from .model import (
    ActionBlock,
    CampaignState,
    CommandRecord,
    ExecutionResult,
    PromptStage,
    StepRecord,
    StopReason,
    Tactic,
    TranslationReport,
    Verdict,
    record_step,
)
from .parsers import (
    ParseOutcome,
    detect_placeholders,
    parse_enumerated_commands,
    parse_tactic,
    parse_translation,
)
from .prompts import CompositionError, PromptEngine
from .transcript import EventKind, LogicalClock, Transcript

DENIED_OUTPUT = "denied by operator"


class OperatingMode(Enum):
    AUTONOMOUS = "autonomous"
    ASSISTED = "assisted"
    OBSERVER = "observer"


class ApprovalVerdict(Enum):
    APPROVE = "approve"
    DENY = "deny"
    EDIT = "edit"
    TAKE_OVER = "take_over"


@dataclass(frozen=True)
class ApprovalDecision:
    verdict: ApprovalVerdict
    replacement: Optional[ActionBlock] = None
    manual_command: Optional[str] = None

    def __post_init__(self) -> None:
        if self.verdict is ApprovalVerdict.EDIT and self.replacement is None:
            raise ValueError("an edit decision needs a replacement block")
        if self.verdict is ApprovalVerdict.TAKE_OVER and not self.manual_command:
            raise ValueError("a take-over decision needs a manual command")


# decide(state, step_index, block) -> ApprovalDecision
ApprovalProvider = Callable[[CampaignState, int, ActionBlock], ApprovalDecision]
EventSink = Callable[[EventKind, int, dict], None]


class StepAborted(RuntimeError):
    """The step could not run (model transport or composition failure); the
    campaign state is unchanged apart from an error event."""


class _ParserGiveUp(Exception):
    pass


@dataclass
class RunDeps:
    gateway: ModelGateway
    executor: Executor
    engine: PromptEngine = field(default_factory=PromptEngine)
    approver: Optional[ApprovalProvider] = None
    cancel_requested: Callable[[], bool] = lambda: False


def check_stop(state: CampaignState) -> Optional[StopReason]:
    """Highest-priority applicable stop reason, if any."""
    if state.tactic is Tactic.END_OF_CAMPAIGN:
        return StopReason.END_OF_CAMPAIGN
    if state.total_actions >= state.config.max_actions:
        return StopReason.MAX_ACTIONS
    if state.consecutive_failures >= state.config.max_consecutive_failures:
        return StopReason.MAX_CONSECUTIVE_FAILURES
    if state.repeat_counts and max(state.repeat_counts.values()) >= state.config.repeat_limit:
        return StopReason.REPEATED_ACTION
    return None


def _params(state: CampaignState) -> CompletionParams:
    return CompletionParams(
        temperature=state.config.temperature,
        max_response_tokens=state.config.response_reserve,
        model=state.config.model,
    )


def _query(
    gateway: ModelGateway,
    params: CompletionParams,
    engine: PromptEngine,
    bundle,
    parser,
    emit: EventSink,
    step_index: int,
):
    """Query the model and parse; one corrective re-prompt on parse failure.

    Returns (value, bundle_used, response). Raises _ParserGiveUp after the
    retry also fails, StepAborted on transport failure.
    """
    current = bundle
    for attempt in (0, 1):
        emit(
            EventKind.PROMPT_COMPOSED,
            step_index,
            {"stage": current.stage.value, "bundle": current.to_dict(), "attempt": attempt},
        )
        try:
            response = gateway.complete(current, params)
        except GatewayError as exc:
            emit(
                EventKind.ERROR,
                step_index,
                {"error": "model_transport", "detail": str(exc)},
            )
            raise StepAborted(str(exc))
        emit(
            EventKind.MODEL_RESPONDED,
            step_index,
            {"stage": current.stage.value, "response": response, "attempt": attempt},
        )
        outcome = parser(response)
        if outcome.ok:
            return outcome.value, current, response
        emit(
            EventKind.ERROR,
            step_index,
            {"error": "parse_failure", "reason": outcome.reason, "attempt": attempt},
        )
        current = engine.with_corrective_suffix(bundle)
    raise _ParserGiveUp()


def _parse_actionable(text: str):
    """Commands parser for the execution stage: a stop-only response is not
    actionable and triggers the corrective re-prompt path."""
    outcome = parse_enumerated_commands(text)
    if outcome.ok and not outcome.value.commands:
        return ParseOutcome.failure("stop without commands", text)
    return outcome


def _synthetic_result(block: ActionBlock, output: str) -> ExecutionResult:
    records = tuple(
        CommandRecord(command=c, exit_status=1, output=output, ran=False)
        for c in block.commands
    )
    return ExecutionResult(records=records)


def step(
    state: CampaignState,
    model_gateway: ModelGateway,
    executor: Executor,
    prompt_engine: PromptEngine,
    mode: OperatingMode = OperatingMode.AUTONOMOUS,
    approver: Optional[ApprovalProvider] = None,
    emit: Optional[EventSink] = None,
    clock=None,
) -> CampaignState:
    """Perform exactly one full chain step:
    execution prompt -> parse -> (approval) -> execute -> translation prompt
    -> verdict -> record -> tactic prompt -> next tactic.
    """
    if state.terminated is not None:
        raise ValueError("campaign already terminated")
    if mode is OperatingMode.ASSISTED and approver is None:
        raise ValueError("assisted mode needs an approval provider")
    events: list[tuple[EventKind, int, dict]] = []
    sink: EventSink = emit if emit is not None else (lambda k, i, p: events.append((k, i, p)))
    clock = clock or LogicalClock()
    index = len(state.history)
    params = _params(state)
    started = clock.now_ms()

    try:
        exec_bundle = prompt_engine.compose_execution_prompt(state)
    except CompositionError as exc:
        sink(EventKind.ERROR, index, {"error": "composition", "detail": str(exc)})
        raise StepAborted(str(exc))

    try:
        block, exec_bundle_used, _ = _query(
            model_gateway, params, prompt_engine, exec_bundle,
            _parse_actionable, sink, index,
        )
    except _ParserGiveUp:
        state.terminate(StopReason.PARSER_GIVE_UP)
        sink(
            EventKind.CAMPAIGN_STOPPED, index,
            {"stop_reason": StopReason.PARSER_GIVE_UP.value},
        )
        return state

    translation: Optional[TranslationReport] = None

    if mode is OperatingMode.ASSISTED:
        sink(EventKind.ACTION_PENDING_APPROVAL, index, {"action": block.to_dict()})
        decision = approver(state, index, block)
        sink(
            EventKind.APPROVAL_DECIDED, index,
            {
                "verdict": decision.verdict.value,
                "action": block.to_dict(),
                "replacement": decision.replacement.to_dict() if decision.replacement else None,
                "manual_command": decision.manual_command,
            },
        )
        if decision.verdict is ApprovalVerdict.DENY:
            result = _synthetic_result(block, DENIED_OUTPUT)
            translation = TranslationReport(
                Verdict.FAIL,
                "Action denied by operator; a different action is required.",
            )
        elif decision.verdict is ApprovalVerdict.EDIT:
            block = decision.replacement
        elif decision.verdict is ApprovalVerdict.TAKE_OVER:
            block = ActionBlock((decision.manual_command,))

    if translation is None:
        spans = detect_placeholders(block)
        if spans:
            result = _synthetic_result(
                block, f"error: placeholder in command, not executable: {', '.join(spans)}"
            )
            sink(EventKind.ERROR, index, {"error": "placeholders", "spans": spans})
        elif mode is OperatingMode.OBSERVER:
            result = ObserverExecutor().execute(block)
        else:
            try:
                result = executor.execute(block)
            except ExecutorError as exc:
                sink(EventKind.ERROR, index, {"error": "executor_transport", "detail": str(exc)})
                raise StepAborted(str(exc))
    sink(
        EventKind.ACTION_EXECUTED, index,
        {"action": block.to_dict(), "execution": result.to_dict()},
    )

    last_cmd = "\n".join(block.commands)
    last_output = result.combined_output or "(no output)"
    if translation is None:
        trans_bundle = prompt_engine.compose_translation_prompt(
            state, last_cmd=last_cmd, last_output=last_output
        )
        try:
            translation, _, _ = _query(
                model_gateway, params, prompt_engine, trans_bundle,
                parse_translation, sink, index,
            )
        except _ParserGiveUp:
            state.terminate(StopReason.PARSER_GIVE_UP)
            sink(
                EventKind.CAMPAIGN_STOPPED, index,
                {"stop_reason": StopReason.PARSER_GIVE_UP.value},
            )
            return state
        trans_bundles = (trans_bundle,)
    else:
        trans_bundles = ()
    sink(EventKind.TRANSLATION_PRODUCED, index, {"translation": translation.to_dict()})

    tactic_bundle = prompt_engine.compose_tactic_prompt(
        state,
        last_cmd=last_cmd,
        last_output=f"{translation.verdict.value} {translation.summary}".strip(),
    )
    try:
        next_tactic, _, _ = _query(
            model_gateway, params, prompt_engine, tactic_bundle,
            parse_tactic, sink, index,
        )
    except _ParserGiveUp:
        state.terminate(StopReason.PARSER_GIVE_UP)
        sink(
            EventKind.CAMPAIGN_STOPPED, index,
            {"stop_reason": StopReason.PARSER_GIVE_UP.value},
        )
        return state
    sink(EventKind.TACTIC_SELECTED, index, {"tactic": next_tactic.value})

    record = StepRecord(
        index=index,
        tactic=state.tactic,
        prompt_bundles=(exec_bundle_used,) + trans_bundles + (tactic_bundle,),
        action=block,
        execution=result,
        translation=translation,
        next_tactic=next_tactic,
        started_at_ms=started,
        finished_at_ms=clock.now_ms(),
    )
    record_step(state, record)
    sink(EventKind.STEP_RECORDED, index, {"step": record.to_dict()})
    state.tactic = next_tactic
    state.stage = PromptStage.EXECUTION
    if next_tactic is Tactic.END_OF_CAMPAIGN:
        state.terminate(StopReason.END_OF_CAMPAIGN)
        sink(
            EventKind.CAMPAIGN_STOPPED, index,
            {"stop_reason": StopReason.END_OF_CAMPAIGN.value},
        )
    return state


def _initial_tactic_select(
    state: CampaignState, deps: RunDeps, sink: EventSink
) -> None:
    """The campaign opens in the tactic-selector stage: ask the model for the
    first tactic before any action exists."""
    bundle = deps.engine.compose_tactic_prompt(state)
    try:
        tactic, _, _ = _query(
            deps.gateway, _params(state), deps.engine, bundle, parse_tactic, sink, -1
        )
    except _ParserGiveUp:
        state.terminate(StopReason.PARSER_GIVE_UP)
        return
    sink(EventKind.TACTIC_SELECTED, -1, {"tactic": tactic.value, "initial": True})
    state.tactic = tactic
    state.stage = PromptStage.EXECUTION
    if tactic is Tactic.END_OF_CAMPAIGN:
        state.terminate(StopReason.END_OF_CAMPAIGN)


def run_campaign(
    state: CampaignState,
    deps: RunDeps,
    mode: OperatingMode = OperatingMode.AUTONOMOUS,
    campaign_id: Optional[str] = None,
    clock=None,
    meta: Optional[dict] = None,
    on_event=None,
) -> Transcript:
    """Repeat steps until the campaign terminates; returns the full transcript.

    With a deterministic gateway, executor, and clock the transcript bytes are
    identical across runs. ``on_event`` (if given) observes each event as it
    is appended.
    """
    clock = clock or LogicalClock()
    transcript = Transcript(
        campaign_id=campaign_id or uuid4().hex,
        config=state.config.to_dict(),
        mode=mode.value,
        meta=meta or {},
        clock=clock,
    )
    if on_event is not None:
        transcript.observers.append(on_event)

    def sink(kind: EventKind, step_index: int, payload: dict) -> None:
        transcript.add_event(kind, step_index, payload)

    if state.stage is PromptStage.TACTIC_SELECT and not state.history and state.terminated is None:
        try:
            _initial_tactic_select(state, deps, sink)
        except StepAborted:
            state.terminate(StopReason.PARSER_GIVE_UP)

    while state.terminated is None:
        if deps.cancel_requested():
            state.terminate(StopReason.OPERATOR_STOP)
            break
        reason = check_stop(state)
        if reason is not None:
            state.terminate(reason)
            break
        try:
            step(
                state,
                deps.gateway,
                deps.executor,
                deps.engine,
                mode=mode,
                approver=deps.approver,
                emit=sink,
                clock=clock,
            )
        except StepAborted:
            state.terminate(StopReason.PARSER_GIVE_UP)
            break

    final = state.terminated or StopReason.PARSER_GIVE_UP
    if not any(e.kind is EventKind.CAMPAIGN_STOPPED for e in transcript.events):
        sink(
            EventKind.CAMPAIGN_STOPPED, len(state.history),
            {"stop_reason": final.value},
        )
    transcript.finalize(final)
    return transcript
