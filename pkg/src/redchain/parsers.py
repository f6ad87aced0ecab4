"""Strict extraction of structured results from raw model text.

Everything here is a pure text function: no command is ever interpreted or
executed. Failures carry a reason plus the offending excerpt so the controller
can decide whether to re-prompt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Generic, Optional, TypeVar

from .model import ActionBlock, Tactic, TranslationReport, Verdict

T = TypeVar("T")

# Observed refusal prefixes; matching any marker short-circuits parsing.
REFUSAL_MARKERS: tuple[str, ...] = (
    "I'm sorry",
    "I cannot assist",
    "As an AI language model",
)

_ENUM_RE = re.compile(r"^\s*\d+[\)\.]\s*")
_STOP_RE = re.compile(r"^stop[.!]?$", re.IGNORECASE)
_PLACEHOLDER_RE = re.compile(r"<[A-Za-z][^<>]*>")
_TACTIC_TOKENS = {
    "RECON": Tactic.RECON,
    "EXPLOIT": Tactic.EXPLOIT,
    "EXFILTRATION": Tactic.EXFILTRATION,
    "END_OF_CAMPAIGN": Tactic.END_OF_CAMPAIGN,
}
# Sentence punctuation that disqualifies a first token from being a command name.
_SENTENCE_PUNCT = set(",.!?;:")


@dataclass(frozen=True)
class ParseOutcome(Generic[T]):
    value: Optional[T] = None
    reason: Optional[str] = None
    excerpt: str = ""

    @property
    def ok(self) -> bool:
        return self.value is not None

    @classmethod
    def success(cls, value: T) -> "ParseOutcome[T]":
        return cls(value=value)

    @classmethod
    def failure(cls, reason: str, excerpt: str = "") -> "ParseOutcome[T]":
        return cls(reason=reason, excerpt=excerpt[:200])


def _is_refusal(text: str) -> bool:
    return any(marker.lower() in text.lower() for marker in REFUSAL_MARKERS)


def _command_shaped(line: str) -> bool:
    first = line.split()[0]
    if any(ch in _SENTENCE_PUNCT for ch in first):
        return False
    # prose tells: a trailing sentence terminator or a clause comma
    if line.endswith((".", "!", "?")) or ", " in line:
        return False
    return True


def parse_enumerated_commands(text: str) -> ParseOutcome[ActionBlock]:
    """Extract an ActionBlock from enumerated ("1) cmd") or bare-line output.

    A line of just STOP (case-insensitive, optional punctuation) flags
    stop_requested and ends parsing. Surrounding quotes and enumeration
    markers are stripped; blank lines are ignored.
    """
    if _is_refusal(text):
        return ParseOutcome.failure("refusal", text)
    commands: list[str] = []
    stop = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        line = _ENUM_RE.sub("", line).strip()
        if not line:
            continue
        if _STOP_RE.match(line):
            stop = True
            break
        if len(line) >= 2 and line[0] == line[-1] and line[0] in "\"'`":
            line = line[1:-1].strip()
            if not line:
                continue
        if not _command_shaped(line):
            continue
        commands.append(line)
    if not commands and not stop:
        return ParseOutcome.failure("no commands", text)
    return ParseOutcome.success(ActionBlock(tuple(commands), stop))


def parse_tactic(text: str) -> ParseOutcome[Tactic]:
    """Map a tactic-selector response to a Tactic token.

    An exact token match (after trimming) wins; otherwise, if exactly one of
    the four tokens occurs anywhere in the text, that token is returned.
    Ambiguous or token-free text fails closed.
    """
    trimmed = text.strip().strip(".").strip()
    if trimmed in _TACTIC_TOKENS:
        return ParseOutcome.success(_TACTIC_TOKENS[trimmed])
    found = {
        tok for tok in _TACTIC_TOKENS
        if re.search(rf"\b{tok}\b", text)
    }
    # END_OF_CAMPAIGN contains no other token, but EXPLOIT is a prefix of
    # nothing here; tokens are distinct words so plain word search suffices.
    if len(found) == 1:
        return ParseOutcome.success(_TACTIC_TOKENS[found.pop()])
    if not found:
        return ParseOutcome.failure("no tactic token", text)
    return ParseOutcome.failure("ambiguous", text)


def parse_translation(text: str) -> ParseOutcome[TranslationReport]:
    """Split a translation response into verdict, summary, and recommendations.

    The leading SUCCESS/FAIL token (tolerant of a following colon or dash)
    decides the verdict; the remainder is the summary. Sentences suggesting a
    next action are copied into recommendations.
    """
    stripped = text.strip()
    m = re.match(r"^(SUCCESS|FAIL(?:URE)?)\b[:\-\s]*", stripped)
    if not m:
        return ParseOutcome.failure("no verdict", text)
    verdict = Verdict.SUCCESS if m.group(1) == "SUCCESS" else Verdict.FAIL
    summary = stripped[m.end():].strip()
    if verdict is Verdict.SUCCESS and not summary:
        return ParseOutcome.failure("empty summary", text)
    recommendations = ""
    rec_parts = [
        seg.strip()
        for seg in re.split(r"(?<=[.;])\s+", summary)
        if re.search(r"\bnext action\b|\bconsider\b|\brecommend", seg, re.IGNORECASE)
    ]
    if rec_parts:
        recommendations = " ".join(rec_parts)
    return ParseOutcome.success(TranslationReport(verdict, summary, recommendations))


def detect_placeholders(block: ActionBlock) -> list[str]:
    """Return angle-bracketed placeholder spans (e.g. <USERNAME>) in any command."""
    spans: list[str] = []
    for cmd in block.commands:
        spans.extend(_PLACEHOLDER_RE.findall(cmd))
    return spans


def render_commands(block: ActionBlock) -> str:
    """Render an ActionBlock back to the enumerated "1) ..." form."""
    lines = [f"{i + 1}) {cmd}" for i, cmd in enumerate(block.commands)]
    if block.stop_requested:
        lines.append("STOP")
    return "\n".join(lines)
