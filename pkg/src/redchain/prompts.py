"""Composes the three chain-stage prompts from SETUP/CONTEXT/INSTRUCTION
sub-prompts, enforces the token budget, and validates prompts against the
prompt grammar.

Template text and the grammar are shipped as versioned data files under
``redchain/data`` and can be overridden to customize tactics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

from .model import CampaignState, PromptBundle, PromptStage, StepRecord, Tactic


class CompositionError(RuntimeError):
    """A prompt could not be composed from the given state."""


class BudgetError(CompositionError):
    """The token budget cannot hold even the elided context."""


def _load_data_file(name: str) -> dict:
    with resources.files("redchain.data").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def load_templates(path: Optional[str] = None) -> dict:
    if path is None:
        return _load_data_file("templates.json")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class PromptGrammar:
    """Three-section prompt skeleton plus per-stage terminal lead phrases."""

    version: int
    start: str
    nonterminals: tuple[str, ...]
    productions: dict
    stages: dict

    @property
    def terminals(self) -> tuple[str, ...]:
        out: list[str] = []
        for stage in self.stages.values():
            out.extend(
                v for k, v in stage.items() if k.endswith("_lead") and isinstance(v, str)
            )
            out.extend(stage.get("branch_leads", {}).values())
        return tuple(out)


def load_grammar(path: Optional[str] = None) -> PromptGrammar:
    raw = _load_data_file("grammar.json") if path is None else json.load(open(path, encoding="utf-8"))
    grammar = PromptGrammar(
        version=raw["version"],
        start=raw["start"],
        nonterminals=tuple(raw["nonterminals"]),
        productions=raw["productions"],
        stages=raw["stages"],
    )
    for lhs, alts in grammar.productions.items():
        for alt in alts:
            for sym in alt:
                if sym not in grammar.nonterminals and sym not in ("context_header",):
                    raise ValueError(f"production for {lhs} uses undeclared symbol {sym}")
    return grammar


@dataclass(frozen=True)
class ValidationResult:
    accepted: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.accepted


def estimate_tokens(text: str) -> int:
    """Token estimate from the 1 token per 3/4 word rule: ceil(words / 0.75)."""
    words = len(text.split())
    return (4 * words + 2) // 3


def validate_prompt(bundle: PromptBundle, grammar: PromptGrammar) -> ValidationResult:
    """Accept iff the composed prompt decomposes into setup/context/instructions
    in order, each section opens with its declared terminal lead phrase, and an
    execution prompt carries exactly one tactic branch."""
    stage_info = grammar.stages.get(bundle.stage.value)
    if stage_info is None:
        return ValidationResult(False, f"unknown stage {bundle.stage.value}")
    for section, text in (
        ("setup", bundle.setup),
        ("context", bundle.context),
        ("instructions", bundle.instruction),
    ):
        if not text.strip():
            return ValidationResult(False, f"missing <{section}>")
    expected = "\n\n".join([bundle.setup, bundle.context, bundle.instruction])
    if bundle.composed != expected:
        return ValidationResult(
            False, "composed text does not decompose into <setup> <context> <instructions>"
        )
    checks = (
        ("setup", bundle.setup, stage_info["setup_lead"]),
        ("context", bundle.context, stage_info["context_lead"]),
        ("instructions", bundle.instruction, stage_info["instruction_lead"]),
    )
    for section, text, lead in checks:
        if not text.startswith(lead):
            return ValidationResult(False, f"<{section}> does not open with {lead!r}")
    branch_leads = stage_info.get("branch_leads")
    if branch_leads:
        hits = sum(bundle.context.count(lead) for lead in branch_leads.values())
        if hits == 0:
            return ValidationResult(False, "missing <tactic_branch>")
        if hits > 1:
            return ValidationResult(False, "duplicate <tactic_branch>")
    return ValidationResult(True)


def _step_entry(step: StepRecord) -> tuple[str, str, str]:
    """(commands text, output text, translation summary) for one history step."""
    cmds = "\n".join(step.action.commands) if step.action.commands else "STOP"
    output = step.execution.combined_output or "(no output)"
    return cmds, output, step.translation.summary


class PromptEngine:
    """Pure prompt composition over immutable state snapshots."""

    def __init__(
        self,
        templates: Optional[dict] = None,
        grammar: Optional[PromptGrammar] = None,
        prompt_budget: int = 3072,
    ) -> None:
        self.templates = templates if templates is not None else load_templates()
        self.grammar = grammar if grammar is not None else load_grammar()
        self.prompt_budget = prompt_budget
        self.separator = self.templates.get("separator", "\n\n")
        self.elision_marker = self.templates.get("elision_marker", "[... output elided ...]")
        self.corrective_suffix = self.templates.get(
            "corrective_suffix", "Respond in the exact required format."
        )

    # -- composition -------------------------------------------------------

    def compose_execution_prompt(self, state: CampaignState) -> PromptBundle:
        if state.tactic is Tactic.END_OF_CAMPAIGN:
            raise CompositionError("cannot compose an execution prompt after END_OF_CAMPAIGN")
        tpl = self.templates["execution"]
        branch_key = state.tactic.value
        if not state.history:
            if state.tactic not in (Tactic.START, Tactic.RECON):
                raise CompositionError(
                    f"tactic {state.tactic.value} needs a last output but history is empty"
                )
            # with no prior action the campaign is by definition at its start
            branch_key = "START"
        branch = tpl["branches"][branch_key].format(target_ip=state.target_ip)
        setup = tpl["setup"]
        instruction = tpl["instruction"]
        ctx_budget = (
            self.prompt_budget
            - estimate_tokens(setup)
            - estimate_tokens(instruction)
            - estimate_tokens(branch)
        )
        header = self.truncate_context(state, ctx_budget)
        context = header + "\n\n" + branch
        return self._bundle(PromptStage.EXECUTION, setup, context, instruction)

    def compose_translation_prompt(
        self,
        state: CampaignState,
        last_cmd: Optional[str] = None,
        last_output: Optional[str] = None,
    ) -> PromptBundle:
        derived_from_last = False
        if last_cmd is None or last_output is None:
            if not state.history:
                raise CompositionError("translation prompt needs an execution result")
            cmds, output, _ = _step_entry(state.history[-1])
            last_cmd = last_cmd if last_cmd is not None else cmds
            last_output = last_output if last_output is not None else output
            derived_from_last = True
        tpl = self.templates["translate"]
        setup = tpl["setup"]
        instruction = tpl["instruction"]
        ctx_budget = self.prompt_budget - estimate_tokens(setup) - estimate_tokens(instruction)
        context = self.truncate_context(
            state, ctx_budget, last_cmd=last_cmd, last_output=last_output,
            include_last_step=not derived_from_last,
        )
        return self._bundle(PromptStage.TRANSLATE, setup, context, instruction)

    def compose_tactic_prompt(
        self,
        state: CampaignState,
        last_cmd: Optional[str] = None,
        last_output: Optional[str] = None,
    ) -> PromptBundle:
        # The tactic selector reasons over the translated report of the last
        # action, not the raw tool output.
        derived_from_last = False
        if last_cmd is None and state.history:
            last_cmd, _, _ = _step_entry(state.history[-1])
            derived_from_last = True
        if last_output is None and state.history:
            last = state.history[-1].translation
            last_output = f"{last.verdict.value} {last.summary}".strip()
            derived_from_last = True
        tpl = self.templates["tactic_select"]
        setup = tpl["setup"]
        instruction = tpl["instruction"]
        ctx_budget = self.prompt_budget - estimate_tokens(setup) - estimate_tokens(instruction)
        context = self._render_header(
            tpl["context_header"],
            state.agent_ip,
            last_cmd if last_cmd is not None else "None",
            last_output if last_output is not None else "None",
        )
        if estimate_tokens(context) > ctx_budget:
            context = self.truncate_context(
                state, ctx_budget,
                last_cmd=last_cmd or "None", last_output=last_output or "None",
                include_last_step=not derived_from_last,
            )
        return self._bundle(PromptStage.TACTIC_SELECT, setup, context, instruction)

    def with_corrective_suffix(self, bundle: PromptBundle) -> PromptBundle:
        """Re-prompt variant used after an unparseable model response."""
        instruction = bundle.instruction + " " + self.corrective_suffix
        return self._bundle(bundle.stage, bundle.setup, bundle.context, instruction)

    def ablation_variants(self) -> list[PromptBundle]:
        """Cumulative execution-prompt statements, first statement alone through
        the full prompt, in their published evaluation order."""
        statements: Sequence[str] = self.templates["ablation_statements"]
        variants: list[PromptBundle] = []
        for i in range(1, len(statements) + 1):
            text = "\n".join(statements[:i])
            variants.append(
                PromptBundle(
                    stage=PromptStage.EXECUTION,
                    setup=text,
                    context="",
                    instruction="",
                    composed=text,
                    token_estimate=estimate_tokens(text),
                )
            )
        return variants

    # -- context budgeting -------------------------------------------------

    def truncate_context(
        self,
        state: CampaignState,
        budget: int,
        last_cmd: Optional[str] = None,
        last_output: Optional[str] = None,
        include_last_step: bool = True,
    ) -> str:
        """Render the CONTEXT header within ``budget`` estimated tokens.

        Oldest steps are dropped first; the most recent command and its output
        always survive. An over-long last output is reduced to the first 60%
        plus the last 40% of the lines that fit, with an elision marker.
        ``include_last_step`` is disabled by callers that already passed the
        newest step through the ``last_cmd``/``last_output`` overrides.
        """
        header_tpl = self.templates["execution"]["context_header"]
        history = state.history if include_last_step else state.history[:-1]
        entries: list[tuple[str, str, str]] = [_step_entry(s) for s in history]
        if last_cmd is not None or last_output is not None:
            entries.append((last_cmd or "None", last_output or "None", ""))
        if not entries:
            entries = [("None", "None", "")]

        def render(items: list[tuple[str, str, str]]) -> str:
            cmds = "\n".join(e[0] for e in items)
            outs = "\n".join(e[1] for e in items)
            return self._render_header(header_tpl, state.agent_ip, cmds, outs)

        while len(entries) > 1 and estimate_tokens(render(entries)) > budget:
            entries.pop(0)
        if estimate_tokens(render(entries)) <= budget:
            return render(entries)

        cmds, output, summary = entries[0]
        overhead = estimate_tokens(render([(cmds, "", "")]))
        allowed = budget - overhead
        summary_line = f"Summary of elided output: {summary}" if summary else ""
        if summary_line and allowed - estimate_tokens(summary_line) > estimate_tokens(
            self.elision_marker
        ) + 4:
            allowed -= estimate_tokens(summary_line)
        else:
            summary_line = ""
        elided = self._elide(output, allowed)
        if summary_line:
            elided = elided + "\n" + summary_line
        result = render([(cmds, elided, "")])
        if estimate_tokens(result) > budget:
            raise BudgetError(f"budget {budget} cannot hold the elided last output")
        return result

    def _elide(self, output: str, allowed: int) -> str:
        marker = self.elision_marker
        if allowed <= estimate_tokens(marker):
            raise BudgetError(f"allotment {allowed} is below the elision marker size")
        lines = output.splitlines()
        units = lines if len(lines) >= 4 else output.split()
        joiner = "\n" if len(lines) >= 4 else " "
        lo, hi, best = 0, len(units), None
        while lo <= hi:
            mid = (lo + hi) // 2
            head = math.ceil(0.6 * mid)
            tail = mid - head
            candidate = joiner.join(units[:head] + [marker] + (units[-tail:] if tail else []))
            if estimate_tokens(candidate) <= allowed:
                best = candidate
                lo = mid + 1
            else:
                hi = mid - 1
        if best is None:
            raise BudgetError(f"allotment {allowed} cannot hold any of the output")
        return best

    # -- internals ---------------------------------------------------------

    @staticmethod
    def _render_header(tpl: str, agent_ip: str, last_cmd: str, last_output: str) -> str:
        return tpl.format(agent_ip=agent_ip, last_cmd=last_cmd, last_output=last_output)

    def _bundle(
        self, stage: PromptStage, setup: str, context: str, instruction: str
    ) -> PromptBundle:
        composed = self.separator.join([setup, context, instruction])
        estimate = estimate_tokens(composed)
        if estimate > self.prompt_budget:
            raise BudgetError(
                f"composed {stage.value} prompt estimates {estimate} tokens "
                f"over budget {self.prompt_budget}"
            )
        return PromptBundle(
            stage=stage,
            setup=setup,
            context=context,
            instruction=instruction,
            composed=composed,
            token_estimate=estimate,
        )
