"""Command-line entry points: run one campaign, batch-evaluate scenarios,
run the prompt-statement ablation, replay a saved transcript, and serve the
operator API."""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path
from typing import Optional

import click

from .controller import OperatingMode, RunDeps, run_campaign
from .evalharness import (
    EvalReport,
    render_ablation,
    render_report,
    run_ablation,
    run_trials,
)
from .executors import SimExecutor
from .gateway import ScriptedGateway, load_script
from .model import CampaignConfig, ConfigurationError, StopReason, new_campaign
from .netsim import ScenarioError, builtin_network, builtin_scenario_names, load_network, sim_scan
from .prompts import PromptEngine
from .transcript import Transcript, TranscriptError

_CONFIG_KEYS = set(CampaignConfig.__dataclass_fields__)
_RUN_KEYS = {"scenario", "script", "seed", "mode"}
_INT_KEYS = {"max_actions", "max_consecutive_failures", "repeat_limit",
             "prompt_budget", "response_reserve", "seed"}
_FLOAT_KEYS = {"temperature", "approval_timeout_s"}


def parse_config_file(path: str) -> dict:
    """Parse a ``key = value`` config file; errors name the path and line."""
    values: dict = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror or exc}")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS | _RUN_KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: bad value for {key!r}: {value!r}")
    return values


def packaged_script_path(name: str) -> str:
    """Resolve a script flag: a bundled script name or a filesystem path."""
    candidate = Path(name)
    if candidate.exists():
        return str(candidate)
    bundled = resources.files("redchain.data").joinpath(f"scripts/{name}.jsonl")
    if bundled.is_file():
        return str(bundled)
    raise ConfigurationError(f"script not found: {name!r} (no such file or bundled script)")


def resolve_network(scenario: str):
    """A built-in scenario name or a scenario file path."""
    if Path(scenario).exists():
        return load_network(scenario)
    return builtin_network(scenario)


def packaged_config_path(name: str) -> str:
    candidate = Path(name)
    if candidate.exists():
        return str(candidate)
    bundled = resources.files("redchain.data").joinpath(f"configs/{name}.cfg")
    if bundled.is_file():
        return str(bundled)
    raise ConfigurationError(f"config not found: {name!r}")


@click.group()
def main() -> None:
    """Campaign runner, evaluation harness, and operator service."""


@main.command("run")
@click.option("--config", "config_path", default="demo", show_default=True,
              help="Config file path or bundled config name.")
@click.option("--mode", type=click.Choice([m.value for m in OperatingMode]), default=None)
@click.option("--scenario", default=None, help="Built-in scenario name or scenario file.")
@click.option("--script", "script_flag", default=None,
              help="Bundled script name or rule file path.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", default=None, help="Transcript output file.")
def cli_run(config_path: str, mode: Optional[str], scenario: Optional[str],
            script_flag: Optional[str], seed: Optional[int], out_path: Optional[str]) -> None:
    """Run one campaign and write its transcript."""
    try:
        values = parse_config_file(packaged_config_path(config_path))
        scenario = scenario or values.get("scenario", "single-vsftpd-2.3.4")
        script_name = script_flag or values.get("script", "demo")
        seed = seed if seed is not None else int(values.get("seed", 0))
        mode_value = mode or values.get("mode", OperatingMode.AUTONOMOUS.value)
        config = CampaignConfig.from_dict({k: v for k, v in values.items() if k in _CONFIG_KEYS})
        network = resolve_network(scenario)
        script = load_script(packaged_script_path(script_name), seed=seed)
        state = new_campaign(config)
    except (ConfigurationError, ScenarioError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    deps = RunDeps(gateway=ScriptedGateway(script, seed=seed),
                   executor=SimExecutor(network), engine=PromptEngine())
    transcript = run_campaign(state, deps, mode=OperatingMode(mode_value),
                              campaign_id=f"run-{scenario}-s{seed}")
    for step in state.history:
        click.echo(
            f"step {step.index} [{step.tactic.value}] "
            f"{'; '.join(step.action.commands)} -> {step.translation.verdict.value} "
            f"(next {step.next_tactic.value})"
        )
    reason = transcript.stop_reason
    click.echo(f"stopped: {reason.value if reason else 'unknown'}")
    if out_path:
        transcript.write(out_path)
        click.echo(f"transcript written to {out_path}")
    sys.exit(0 if reason is StopReason.END_OF_CAMPAIGN else 1)


@main.command("eval")
@click.option("--scenario", "scenarios", multiple=True, required=True,
              help="Built-in scenario name (repeatable).")
@click.option("--script", "script_flag", required=True)
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--csv", is_flag=True, default=False)
@click.option("--out", "out_path", default=None, help="Report output file.")
def cli_eval(scenarios: tuple[str, ...], script_flag: str, trials: int, seed: int,
             csv: bool, out_path: Optional[str]) -> None:
    """Run scripted trials per scenario and render the outcome table."""
    if trials < 1:
        click.echo("error: --trials must be at least 1", err=True)
        sys.exit(2)
    try:
        script = load_script(packaged_script_path(script_flag), seed=seed)
    except (ConfigurationError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    report = EvalReport(trials_per_scenario=trials)
    errors: list[str] = []
    for scenario in scenarios:
        try:
            partial = run_trials([scenario], script, trials=trials, base_seed=seed)
        except (ScenarioError, ValueError) as exc:
            errors.append(scenario)
            click.echo(f"error in scenario {scenario!r}: {exc}", err=True)
            continue
        report.results.extend(partial.results)
    text = render_report(report, csv=csv)
    for scenario in errors:
        text += ("\n" if text else "") + (f"{scenario},ERROR" if csv else f"{scenario}  ERROR")
    click.echo(text)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")


@main.command("ablate")
@click.option("--script", "script_flag", default="ablation", show_default=True)
@click.option("--scenario", default="single-vsftpd-2.3.4", show_default=True,
              help="Scenario used to produce the canned scan observation.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--csv", is_flag=True, default=False)
def cli_ablate(script_flag: str, scenario: str, seed: int, csv: bool) -> None:
    """Replay the cumulative prompt-statement sequence and tabulate responses."""
    try:
        script = load_script(packaged_script_path(script_flag), seed=seed)
        network = resolve_network(scenario)
    except (ConfigurationError, ScenarioError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    target_ip = network.hosts[0].ip if network.hosts else "172.16.2.3"
    scan = sim_scan(network, f"nmap -sV {target_ip}")
    rows = run_ablation(ScriptedGateway(script, seed=seed), scan_output=scan)
    click.echo(render_ablation(rows, csv=csv))


@main.command("replay")
@click.argument("transcript_path")
def cli_replay(transcript_path: str) -> None:
    """Re-render a saved transcript as an ordered narrative; contacts nothing."""
    try:
        transcript = Transcript.read(transcript_path)
    except OSError as exc:
        click.echo(f"error: {transcript_path}: {exc.strerror or exc}", err=True)
        sys.exit(2)
    except TranscriptError as exc:
        click.echo(f"error: {transcript_path}: {exc}", err=True)
        sys.exit(2)
    click.echo(f"campaign {transcript.campaign_id} (mode {transcript.mode})")
    for step in transcript.steps():
        click.echo(f"step {step.index} [{step.tactic.value}]")
        for bundle in step.prompt_bundles:
            head = bundle.composed.splitlines()[0] if bundle.composed else ""
            click.echo(f"  prompt ({bundle.stage.value}): {head[:100]}")
        for record in step.execution.records:
            click.echo(f"  $ {record.command}")
            for line in record.output.splitlines()[:6]:
                click.echo(f"    {line}")
        click.echo(
            f"  verdict: {step.translation.verdict.value} {step.translation.summary[:100]}"
        )
        click.echo(f"  next tactic: {step.next_tactic.value}")
    reason = transcript.stop_reason
    click.echo(f"stopped: {reason.value if reason else 'unknown'}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def cli_serve(host: str, port: int) -> None:
    """Serve the operator API (and console assets when built)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


@main.command("scenarios")
def cli_scenarios() -> None:
    """List the built-in scenario names."""
    for name in builtin_scenario_names():
        click.echo(name)


if __name__ == "__main__":
    main()
