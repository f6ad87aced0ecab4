"""Model-completion gateways: a live chat-completion client and a
deterministic scripted stand-in for hermetic runs and evaluation.

Script files are line-oriented: one JSON rule object per line. Rules are
matched first-rule-wins against the composed prompt text, so scripts stay
portable across prompt-engine internals. A rule holds either a fixed
``response``, an ordered ``sequence`` consumed one entry per match, or a
``choices`` list of weighted responses sampled reproducibly from the seed.
"""

from __future__ import annotations

import json
import os
import random
import re
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol

import requests

from .model import PromptBundle, PromptStage


class GatewayError(RuntimeError):
    """Base class for completion failures."""


class NoRuleMatched(GatewayError):
    """No scripted rule matched the prompt."""


class ModelRejected(GatewayError):
    """The live endpoint rejected the request (4xx); body surfaced verbatim."""


class TransportError(GatewayError):
    """Transport failed after exhausting retries."""


class ScriptError(ValueError):
    """A script file violated the rule schema."""


@dataclass(frozen=True)
class CompletionParams:
    temperature: float = 1.0
    max_response_tokens: int = 1024
    model: str = "gpt-3.5-turbo"

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")


class ModelGateway(Protocol):
    def complete(self, bundle: PromptBundle, params: CompletionParams) -> str: ...


@dataclass(frozen=True)
class WeightedResponse:
    text: str
    weight: float


@dataclass(frozen=True)
class ScriptRule:
    name: str
    stage: Optional[PromptStage] = None
    contains: Optional[str] = None
    pattern: Optional[str] = None
    response: Optional[str] = None
    sequence: tuple[str, ...] = ()
    choices: tuple[WeightedResponse, ...] = ()

    def matches(self, bundle: PromptBundle) -> bool:
        if self.stage is not None and bundle.stage is not self.stage:
            return False
        if self.contains is not None and self.contains not in bundle.composed:
            return False
        if self.pattern is not None and not re.search(self.pattern, bundle.composed):
            return False
        return True


@dataclass
class ScenarioScript:
    rules: list[ScriptRule] = field(default_factory=list)
    seed: int = 0


def _parse_rule(obj: dict, lineno: int) -> ScriptRule:
    def fail(msg: str) -> ScriptError:
        return ScriptError(f"line {lineno}: {msg}")

    if not isinstance(obj, dict):
        raise fail("rule must be a JSON object")
    name = obj.get("name")
    if not name or not isinstance(name, str):
        raise fail("rule needs a string 'name'")
    stage = None
    if "stage" in obj:
        try:
            stage = PromptStage(obj["stage"])
        except ValueError:
            raise fail(f"unknown stage {obj['stage']!r}")
    body_keys = [k for k in ("response", "sequence", "choices") if k in obj]
    if len(body_keys) != 1:
        raise fail("rule needs exactly one of 'response', 'sequence', 'choices'")
    response = obj.get("response")
    sequence: tuple[str, ...] = ()
    choices: tuple[WeightedResponse, ...] = ()
    if "sequence" in obj:
        if not obj["sequence"] or not all(isinstance(s, str) for s in obj["sequence"]):
            raise fail("'sequence' must be a non-empty list of strings")
        sequence = tuple(obj["sequence"])
    if "choices" in obj:
        parsed = []
        for c in obj["choices"]:
            weight = c.get("weight", 1)
            if not isinstance(weight, (int, float)) or weight <= 0:
                raise fail("choice weights must be positive numbers")
            parsed.append(WeightedResponse(text=c["response"], weight=float(weight)))
        if not parsed:
            raise fail("'choices' must be non-empty")
        choices = tuple(parsed)
    return ScriptRule(
        name=name,
        stage=stage,
        contains=obj.get("contains"),
        pattern=obj.get("pattern"),
        response=response,
        sequence=sequence,
        choices=choices,
    )


def load_script(path: str, seed: int = 0) -> ScenarioScript:
    """Parse a line-oriented rule file. Rules keep file order; duplicate rule
    names are rejected. Schema violations report the offending line number."""
    rules: list[ScriptRule] = []
    names: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScriptError(f"line {lineno}: invalid JSON ({exc.msg})")
            rule = _parse_rule(obj, lineno)
            if rule.name in names:
                raise ScriptError(f"line {lineno}: duplicate rule name {rule.name!r}")
            names.add(rule.name)
            rules.append(rule)
    return ScenarioScript(rules=rules, seed=seed)


class ScriptedGateway:
    """Deterministic model stand-in answering from a ScenarioScript.

    Identical (script, seed, prompt sequence) produces an identical response
    sequence: weighted choices are drawn from one seeded RNG in call order and
    sequences advance one entry per match (the final entry repeats).
    """

    def __init__(self, script: ScenarioScript, seed: Optional[int] = None) -> None:
        self.script = script
        self.seed = script.seed if seed is None else seed
        self._rng = random.Random(self.seed)
        self._cursors: dict[str, int] = {}

    def complete(self, bundle: PromptBundle, params: CompletionParams) -> str:
        for rule in self.script.rules:
            if not rule.matches(bundle):
                continue
            if rule.response is not None:
                return rule.response
            if rule.sequence:
                idx = self._cursors.get(rule.name, 0)
                self._cursors[rule.name] = idx + 1
                return rule.sequence[min(idx, len(rule.sequence) - 1)]
            texts = [c.text for c in rule.choices]
            weights = [c.weight for c in rule.choices]
            return self._rng.choices(texts, weights=weights, k=1)[0]
        raise NoRuleMatched(
            f"no rule matched stage={bundle.stage.value} prompt head "
            f"{bundle.composed[:80]!r}"
        )


ENDPOINT_URL_ENV = "REDCHAIN_LLM_URL"
API_KEY_ENV = "REDCHAIN_LLM_KEY"


class LiveChatGateway:
    """Chat-completion endpoint client.

    The composed prompt is sent byte-for-byte as a single user message; with
    ``split_system_role`` the SETUP section travels in the system role instead.
    Transient transport failures retry up to 3 times with exponential backoff.
    """

    def __init__(
        self,
        url: Optional[str] = None,
        api_key: Optional[str] = None,
        timeout_s: float = 60.0,
        split_system_role: bool = False,
        transport=None,
        sleeper=time.sleep,
        max_retries: int = 3,
    ) -> None:
        self.url = url or os.environ.get(ENDPOINT_URL_ENV, "")
        if not self.url:
            raise GatewayError(f"no endpoint URL; set {ENDPOINT_URL_ENV}")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout_s = timeout_s
        self.split_system_role = split_system_role
        self.transport = transport or requests
        self.sleeper = sleeper
        self.max_retries = max_retries

    def _messages(self, bundle: PromptBundle) -> list[dict]:
        if self.split_system_role:
            remainder = bundle.composed[len(bundle.setup):].lstrip("\n")
            return [
                {"role": "system", "content": bundle.setup},
                {"role": "user", "content": remainder},
            ]
        return [{"role": "user", "content": bundle.composed}]

    def complete(self, bundle: PromptBundle, params: CompletionParams) -> str:
        payload = {
            "model": params.model,
            "messages": self._messages(bundle),
            "temperature": params.temperature,
            "max_tokens": params.max_response_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        delay = 0.5
        last_exc: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self.transport.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_exc = exc
                if attempt < self.max_retries:
                    self.sleeper(delay)
                    delay *= 2
                continue
            if 400 <= resp.status_code < 500:
                raise ModelRejected(resp.text)
            if resp.status_code >= 500:
                last_exc = GatewayError(f"server error {resp.status_code}")
                if attempt < self.max_retries:
                    self.sleeper(delay)
                    delay *= 2
                continue
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        raise TransportError(f"retries exhausted: {last_exc}")
