import pytest

from redchain.gateway import ScenarioScript, load_script
from redchain.model import (
    ActionBlock,
    CampaignConfig,
    CommandRecord,
    ExecutionResult,
    PromptBundle,
    PromptStage,
    StepRecord,
    Tactic,
    TranslationReport,
    Verdict,
    new_campaign,
)
from redchain.prompts import PromptEngine, estimate_tokens


@pytest.fixture
def engine():
    return PromptEngine()


@pytest.fixture
def config():
    return CampaignConfig(agent_ip="172.16.2.2", target_ip="172.16.2.3")


@pytest.fixture
def fresh_state(config):
    return new_campaign(config)


def bundle_for(stage, setup="s", context="c", instruction="i"):
    composed = "\n\n".join([setup, context, instruction])
    return PromptBundle(
        stage=stage,
        setup=setup,
        context=context,
        instruction=instruction,
        composed=composed,
        token_estimate=estimate_tokens(composed),
    )


def make_step(
    index,
    tactic=Tactic.RECON,
    commands=("nmap -sV 172.16.2.3",),
    output="scan output",
    verdict=Verdict.SUCCESS,
    next_tactic=Tactic.EXPLOIT,
    summary="looks fine",
):
    action = ActionBlock(tuple(commands))
    records = tuple(
        CommandRecord(command=c, exit_status=0, output=output) for c in commands
    )
    return StepRecord(
        index=index,
        tactic=tactic,
        prompt_bundles=(bundle_for(PromptStage.EXECUTION),),
        action=action,
        execution=ExecutionResult(records=records),
        translation=TranslationReport(verdict, summary),
        next_tactic=next_tactic,
    )


def script_from_rules(tmp_path, rules, seed=0) -> ScenarioScript:
    """Write JSONL rule lines to a temp file and load them."""
    import json

    path = tmp_path / "script.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rules) + "\n", encoding="utf-8")
    return load_script(str(path), seed=seed)
