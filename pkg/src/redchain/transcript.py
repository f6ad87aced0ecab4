"""Append-only campaign transcript: one self-describing JSON record per line.

The first line is a schema-versioned header with the config snapshot; every
following line is one event with a per-campaign sequence number; the final
line records the stop reason. Serialization is canonical (sorted keys, fixed
separators) so replays and re-serializations are byte-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import StepRecord, StopReason

SCHEMA_VERSION = 1


class TranscriptError(ValueError):
    """Raised on corrupt, truncated, or tampered transcript input."""


class EventKind(Enum):
    PROMPT_COMPOSED = "prompt_composed"
    MODEL_RESPONDED = "model_responded"
    ACTION_PENDING_APPROVAL = "action_pending_approval"
    APPROVAL_DECIDED = "approval_decided"
    ACTION_EXECUTED = "action_executed"
    TRANSLATION_PRODUCED = "translation_produced"
    TACTIC_SELECTED = "tactic_selected"
    STEP_RECORDED = "step_recorded"
    ERROR = "error"
    CAMPAIGN_STOPPED = "campaign_stopped"


@dataclass(frozen=True)
class Event:
    seq: int
    kind: EventKind
    step_index: int
    payload: dict
    ts_ms: int

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind.value,
            "step_index": self.step_index,
            "payload": self.payload,
            "ts_ms": self.ts_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(d["seq"], EventKind(d["kind"]), d["step_index"], d["payload"], d["ts_ms"])


class LogicalClock:
    """Deterministic clock: monotonically increasing milliseconds from zero."""

    def __init__(self, start_ms: int = 0, tick_ms: int = 1) -> None:
        self._now = start_ms
        self._tick = tick_ms

    def now_ms(self) -> int:
        value = self._now
        self._now += self._tick
        return value


class WallClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class Transcript:
    """Ordered event log of one campaign, sufficient for deterministic replay."""

    campaign_id: str
    config: dict
    mode: str
    meta: dict = field(default_factory=dict)
    events: list[Event] = field(default_factory=list)
    stop_reason: Optional[StopReason] = None
    clock: object = field(default_factory=LogicalClock, repr=False)
    # called with each new Event; lets live subscribers follow the log
    observers: list = field(default_factory=list, repr=False)

    def add_event(self, kind: EventKind, step_index: int, payload: dict) -> Event:
        event = Event(
            seq=len(self.events),
            kind=kind,
            step_index=step_index,
            payload=payload,
            ts_ms=self.clock.now_ms(),
        )
        self.events.append(event)
        for observer in self.observers:
            observer(event)
        return event

    def finalize(self, reason: StopReason) -> None:
        self.stop_reason = reason

    def steps(self) -> list[StepRecord]:
        return [
            StepRecord.from_dict(e.payload["step"])
            for e in self.events
            if e.kind is EventKind.STEP_RECORDED
        ]

    def to_jsonl(self) -> str:
        lines = [
            _dumps(
                {
                    "record": "header",
                    "schema_version": SCHEMA_VERSION,
                    "campaign_id": self.campaign_id,
                    "config": self.config,
                    "mode": self.mode,
                    "meta": self.meta,
                }
            )
        ]
        lines.extend(_dumps({"record": "event", **e.to_dict()}) for e in self.events)
        lines.append(
            _dumps(
                {
                    "record": "final",
                    "stop_reason": self.stop_reason.value if self.stop_reason else None,
                }
            )
        )
        return "\n".join(lines) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise TranscriptError("empty transcript: missing header record")
        records = []
        for offset, line in enumerate(lines):
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise TranscriptError(f"bad record at line {offset + 1}: {exc.msg}")
        header = records[0]
        if header.get("record") != "header":
            raise TranscriptError("line 1: expected the header record")
        if header.get("schema_version") != SCHEMA_VERSION:
            raise TranscriptError(
                f"unsupported schema version {header.get('schema_version')!r}"
            )
        transcript = cls(
            campaign_id=header["campaign_id"],
            config=header["config"],
            mode=header["mode"],
            meta=header.get("meta", {}),
        )
        stop_reason: Optional[str] = None
        saw_final = False
        for offset, rec in enumerate(records[1:], start=2):
            if rec.get("record") == "final":
                saw_final = True
                stop_reason = rec.get("stop_reason")
                continue
            if saw_final:
                raise TranscriptError(f"line {offset}: record after the final record")
            if rec.get("record") != "event":
                raise TranscriptError(f"line {offset}: unknown record type")
            event = Event.from_dict(rec)
            if event.seq != len(transcript.events):
                raise TranscriptError(
                    f"line {offset}: event sequence {event.seq} breaks total order "
                    f"(expected {len(transcript.events)})"
                )
            transcript.events.append(event)
        if not saw_final:
            raise TranscriptError(f"line {len(lines)}: truncated transcript, no final record")
        if stop_reason is not None:
            transcript.stop_reason = StopReason(stop_reason)
        return transcript

    @classmethod
    def read(cls, path: str) -> "Transcript":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())
