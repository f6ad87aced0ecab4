"""Core campaign domain types: stages, tactics, actions, step records, state."""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class ConfigurationError(ValueError):
    """Raised when a campaign configuration is malformed."""


class ConsistencyError(RuntimeError):
    """Raised when an internal invariant (e.g. step index continuity) breaks."""


class PromptStage(Enum):
    TACTIC_SELECT = "tactic_select"
    EXECUTION = "execution"
    TRANSLATE = "translate"


class Tactic(Enum):
    START = "START"
    RECON = "RECON"
    EXPLOIT = "EXPLOIT"
    EXFILTRATION = "EXFILTRATION"
    DEFAULT = "DEFAULT"
    END_OF_CAMPAIGN = "END_OF_CAMPAIGN"


class StopReason(Enum):
    END_OF_CAMPAIGN = "END_OF_CAMPAIGN"
    MAX_ACTIONS = "MAX_ACTIONS"
    MAX_CONSECUTIVE_FAILURES = "MAX_CONSECUTIVE_FAILURES"
    REPEATED_ACTION = "REPEATED_ACTION"
    PARSER_GIVE_UP = "PARSER_GIVE_UP"
    OPERATOR_STOP = "OPERATOR_STOP"


class Verdict(Enum):
    SUCCESS = "SUCCESS"
    FAIL = "FAIL"


@dataclass(frozen=True)
class ActionBlock:
    """An ordered list of executable command lines parsed from a model response."""

    commands: tuple[str, ...] = ()
    stop_requested: bool = False

    def __post_init__(self) -> None:
        if not self.commands and not self.stop_requested:
            raise ValueError("ActionBlock needs commands or a stop request")

    def to_dict(self) -> dict:
        return {"commands": list(self.commands), "stop_requested": self.stop_requested}

    @classmethod
    def from_dict(cls, d: dict) -> "ActionBlock":
        return cls(tuple(d["commands"]), bool(d["stop_requested"]))


@dataclass(frozen=True)
class CommandRecord:
    """Outcome of dispatching one command line."""

    command: str
    exit_status: int
    output: str
    duration_ms: int = 0
    timed_out: bool = False
    ran: bool = True

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "exit_status": self.exit_status,
            "output": self.output,
            "duration_ms": self.duration_ms,
            "timed_out": self.timed_out,
            "ran": self.ran,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommandRecord":
        return cls(
            d["command"], d["exit_status"], d["output"],
            d.get("duration_ms", 0), d.get("timed_out", False), d.get("ran", True),
        )


@dataclass(frozen=True)
class ExecutionResult:
    """Per-command results plus session open/close events observed during execution."""

    records: tuple[CommandRecord, ...] = ()
    session_events: tuple[str, ...] = ()

    @property
    def combined_output(self) -> str:
        return "\n".join(r.output for r in self.records if r.output)

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "session_events": list(self.session_events),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionResult":
        return cls(
            tuple(CommandRecord.from_dict(r) for r in d["records"]),
            tuple(d.get("session_events", [])),
        )


@dataclass(frozen=True)
class TranslationReport:
    """SUCCESS/FAIL verdict with a free-text summary and optional recommendations."""

    verdict: Verdict
    summary: str
    recommendations: str = ""

    def __post_init__(self) -> None:
        if self.verdict is Verdict.SUCCESS and not self.summary.strip():
            raise ValueError("a SUCCESS verdict requires a non-empty summary")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "summary": self.summary,
            "recommendations": self.recommendations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TranslationReport":
        return cls(Verdict(d["verdict"]), d["summary"], d.get("recommendations", ""))


@dataclass(frozen=True)
class PromptBundle:
    """Composed SETUP/CONTEXT/INSTRUCTION text for one chain stage."""

    stage: PromptStage
    setup: str
    context: str
    instruction: str
    composed: str
    token_estimate: int

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "setup": self.setup,
            "context": self.context,
            "instruction": self.instruction,
            "composed": self.composed,
            "token_estimate": self.token_estimate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptBundle":
        return cls(
            PromptStage(d["stage"]), d["setup"], d["context"],
            d["instruction"], d["composed"], d["token_estimate"],
        )


@dataclass(frozen=True)
class StepRecord:
    """One completed chain step: prompts, action, execution, translation, next tactic."""

    index: int
    tactic: Tactic
    prompt_bundles: tuple[PromptBundle, ...]
    action: ActionBlock
    execution: ExecutionResult
    translation: TranslationReport
    next_tactic: Tactic
    started_at_ms: int = 0
    finished_at_ms: int = 0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "tactic": self.tactic.value,
            "prompt_bundles": [b.to_dict() for b in self.prompt_bundles],
            "action": self.action.to_dict(),
            "execution": self.execution.to_dict(),
            "translation": self.translation.to_dict(),
            "next_tactic": self.next_tactic.value,
            "started_at_ms": self.started_at_ms,
            "finished_at_ms": self.finished_at_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(
            index=d["index"],
            tactic=Tactic(d["tactic"]),
            prompt_bundles=tuple(PromptBundle.from_dict(b) for b in d["prompt_bundles"]),
            action=ActionBlock.from_dict(d["action"]),
            execution=ExecutionResult.from_dict(d["execution"]),
            translation=TranslationReport.from_dict(d["translation"]),
            next_tactic=Tactic(d["next_tactic"]),
            started_at_ms=d.get("started_at_ms", 0),
            finished_at_ms=d.get("finished_at_ms", 0),
        )


@dataclass
class CampaignConfig:
    agent_ip: str
    target_ip: str
    objective: str = "EXFILTRATE data from the machine"
    max_actions: int = 30
    max_consecutive_failures: int = 3
    repeat_limit: int = 3
    prompt_budget: int = 3072
    response_reserve: int = 1024
    model: str = "gpt-3.5-turbo"
    temperature: float = 1.0
    approval_timeout_s: float = 600.0

    def to_dict(self) -> dict:
        return {
            "agent_ip": self.agent_ip,
            "target_ip": self.target_ip,
            "objective": self.objective,
            "max_actions": self.max_actions,
            "max_consecutive_failures": self.max_consecutive_failures,
            "repeat_limit": self.repeat_limit,
            "prompt_budget": self.prompt_budget,
            "response_reserve": self.response_reserve,
            "model": self.model,
            "temperature": self.temperature,
            "approval_timeout_s": self.approval_timeout_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


@dataclass
class CampaignState:
    """Full mutable state of one campaign run. Owned by exactly one runner."""

    config: CampaignConfig
    stage: PromptStage = PromptStage.TACTIC_SELECT
    tactic: Tactic = Tactic.START
    history: list[StepRecord] = field(default_factory=list)
    consecutive_failures: int = 0
    total_actions: int = 0
    repeat_counts: dict[str, int] = field(default_factory=dict)
    terminated: Optional[StopReason] = None

    @property
    def agent_ip(self) -> str:
        return self.config.agent_ip

    @property
    def target_ip(self) -> str:
        return self.config.target_ip

    def terminate(self, reason: StopReason) -> None:
        # once set, the stop reason is never cleared or overwritten
        if self.terminated is None:
            self.terminated = reason


def _validate_ip(value: str, name: str) -> None:
    try:
        ipaddress.ip_address(value)
    except ValueError:
        raise ConfigurationError(f"{name} is not a valid IP address: {value!r}")


def new_campaign(config: CampaignConfig) -> CampaignState:
    """Create a fresh campaign: tactic-select stage, Start tactic, empty history."""
    _validate_ip(config.agent_ip, "agent_ip")
    _validate_ip(config.target_ip, "target_ip")
    if config.max_actions < 0 or config.max_consecutive_failures < 1 or config.repeat_limit < 1:
        raise ConfigurationError("stop thresholds out of range")
    return CampaignState(config=config)


def record_step(state: CampaignState, step: StepRecord) -> CampaignState:
    """Append a step to the history and update the derived counters."""
    if step.index != len(state.history):
        raise ConsistencyError(
            f"step index {step.index} does not follow history length {len(state.history)}"
        )
    state.history.append(step)
    state.total_actions += len(step.action.commands)
    if step.translation.verdict is Verdict.SUCCESS:
        state.consecutive_failures = 0
    else:
        state.consecutive_failures += 1
    if step.action.commands:
        key = normalize_action_key(step.action)
        state.repeat_counts[key] = state.repeat_counts.get(key, 0) + 1
    return state


_SESSION_ID_RE = re.compile(r"(sessions\s+-i\s+)\d+")


def normalize_action_key(block: ActionBlock) -> str:
    """Deterministic canonical key for repeat detection and unique-action counting.

    Commands are lowercased with whitespace runs collapsed; volatile session
    identifiers after "sessions -i" are masked so interactive follow-ups with
    different session numbers map to the same key.
    """
    if not block.commands:
        raise ValueError("cannot derive a key from a stop-only block")
    parts = []
    for cmd in block.commands:
        norm = " ".join(cmd.split()).lower()
        norm = _SESSION_ID_RE.sub(r"\1N", norm)
        parts.append(norm)
    return " ; ".join(parts)
