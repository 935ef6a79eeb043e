"""Command line entry point.

Exit codes: 0 success, 2 validation or data error, 3 environment or transport error.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from pathlib import Path

import click

from .backends import (
    DEFAULT_API_KEY_ENV,
    DEFAULT_BASE_URL,
    BackendError,
    HttpBackend,
    ModelSpec,
    ScriptedBackend,
    model_spec_for,
)
from .demo import demo_files
from .errors import AlasError, DataError, EnvironmentProblem
from .evaluation import compute_reports, export_survey, ingest_ratings, render_distribution, render_table
from .knowledge import fixed_clock
from .orchestrator import RunAborted, RunConfig, RunResult, dry_run, run_metadata, run_task, write_run_artifacts
from .profiles import load_roster, validate_roster
from .prompts import TokenBudget, render_prompt
from .stories import load_story_corpus
from .tasks import generate_plan, load_plan, load_task, plan_warnings, save_plan, validate_plan

EXIT_OK, EXIT_DATA, EXIT_ENV = 0, 2, 3

logger = logging.getLogger("alas")


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn):
    """Map package errors onto the exit-code contract."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EnvironmentProblem as exc:
            _fail(str(exc), EXIT_ENV)
        except BackendError as exc:
            _fail(str(exc), EXIT_ENV)
        except AlasError as exc:
            _fail(str(exc), EXIT_DATA)
        except (OSError, ValueError) as exc:
            _fail(str(exc), EXIT_DATA)
    return wrapper


def _model_spec(model: str) -> ModelSpec:
    try:
        return model_spec_for(model)
    except KeyError:
        # Unknown tags fall back to the smaller window.
        return ModelSpec(model, 16384, 4096)


def _load_script(path: str | None) -> list[str]:
    if not path:
        raise DataError("--script is required with the scripted backend")
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise DataError(f"{path}: script must be a JSON array of strings")
    return data


def _make_backend(kind: str, model: str, script: str | None, base_url: str, api_key_env: str):
    spec = _model_spec(model)
    if kind == "scripted":
        return ScriptedBackend(_load_script(script), spec)
    return HttpBackend(spec, base_url=base_url, api_key_env=api_key_env)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file with default option values per command.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    """Role-playing LLM agents that improve agile user stories."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if config_path:
        try:
            ctx.default_map = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            _fail(f"{config_path}: {exc}", EXIT_DATA)


@cli.command("init")
@click.argument("directory", type=click.Path(file_okay=False))
@click.option("--force", is_flag=True, help="Write into a non-empty directory.")
def cmd_init(directory: str, force: bool) -> None:
    """Scaffold the demo task, roster, plan, stories, scripts and ratings."""
    d = Path(directory)
    if d.exists() and any(d.iterdir()) and not force:
        _fail(f"{d} is not empty; use --force to overwrite", EXIT_DATA)
    d.mkdir(parents=True, exist_ok=True)
    for name, content in demo_files().items():
        (d / name).write_text(content, encoding="utf-8")
        click.echo(f"wrote {d / name}")


@cli.group("plan")
def plan_group() -> None:
    """Generate or validate subtask plans."""


@plan_group.command("validate")
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--roster", "roster_path", required=True, type=click.Path(exists=True, dir_okay=False))
@_guard
def cmd_plan_validate(plan_path: str, roster_path: str) -> None:
    roster = load_roster(roster_path)
    plan = load_plan(plan_path)
    problems = [str(v) for v in validate_plan(plan, roster)] + validate_roster(roster)
    for w in plan_warnings(plan, roster):
        click.echo(f"warning: {w}", err=True)
    if problems:
        for p in problems:
            click.echo(f"violation: {p}")
        sys.exit(EXIT_DATA)
    click.echo(f"ok: {len(plan)} subtasks, {roster.k} agents")


@plan_group.command("generate")
@click.option("--task", "task_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--roster", "roster_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--backend", type=click.Choice(["http", "scripted"]), default="http", show_default=True)
@click.option("--model", default="gpt-3.5-turbo-16k", show_default=True)
@click.option("--script", type=click.Path(exists=True, dir_okay=False), help="Replies for the scripted backend.")
@click.option("--max-attempts", default=3, show_default=True, type=click.IntRange(1))
@click.option("--temperature", default=1.0, show_default=True, type=click.FloatRange(0))
@click.option("--base-url", default=DEFAULT_BASE_URL, show_default=True)
@click.option("--api-key-env", default=DEFAULT_API_KEY_ENV, show_default=True)
@_guard
def cmd_plan_generate(task_path, roster_path, out, backend, model, script, max_attempts, temperature,
                      base_url, api_key_env) -> None:
    task = load_task(task_path)
    roster = load_roster(roster_path)
    planner = _make_backend(backend, model, script, base_url, api_key_env)
    plan = generate_plan(task, roster, planner, max_attempts=max_attempts, temperature=temperature)
    save_plan(plan, out)
    click.echo(f"wrote {out}: {len(plan)} subtasks (attempt {plan.attempts})")


@cli.command("run")
@click.option("--task", "task_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--roster", "roster_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dry-run/--live", "dry", default=None,
              help="Print prompts only / call the backend. Default: dry run when no API key is set.")
@click.option("--backend", type=click.Choice(["http", "scripted"]), default="http", show_default=True)
@click.option("--model", default="gpt-3.5-turbo-16k", show_default=True)
@click.option("--script", type=click.Path(exists=True, dir_okay=False), help="Replies for the scripted backend.")
@click.option("--temperature", default=1.0, show_default=True, type=click.FloatRange(0))
@click.option("--max-retries", default=3, show_default=True, type=click.IntRange(0))
@click.option("--version-label", default="v.1", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), help="Directory for transcript and metadata.")
@click.option("--base-url", default=DEFAULT_BASE_URL, show_default=True)
@click.option("--api-key-env", default=DEFAULT_API_KEY_ENV, show_default=True)
@click.option("--clock", hidden=True, help="Fixed ISO timestamp for reproducible transcripts.")
@_guard
def cmd_run(task_path, plan_path, roster_path, dry, backend, model, script, temperature, max_retries,
            version_label, out, base_url, api_key_env, clock) -> None:
    """Execute a plan, or print the prompts it would issue."""
    task = load_task(task_path)
    plan = load_plan(plan_path)
    roster = load_roster(roster_path)
    problems = [str(v) for v in validate_plan(plan, roster)] + validate_roster(roster)
    if problems:
        _fail("; ".join(problems), EXIT_DATA)

    if dry is None:
        dry = backend == "http" and not os.environ.get(api_key_env)
        if dry:
            click.echo(f"note: {api_key_env} not set; doing a dry run", err=True)
    config = RunConfig(temperature=temperature, max_retries=max_retries, dry_run=dry, version_label=version_label)

    if dry:
        budget = TokenBudget.for_model(_model_spec(model))
        prompts = dry_run(task, plan, roster, config, budget)
        for p in prompts:
            click.echo(f"######## prompt {p.subtask_index} -> {p.target_agent_id}")
            click.echo(render_prompt(p))
            click.echo()
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "prompts.txt").write_text(
                "".join(f"######## prompt {p.subtask_index} -> {p.target_agent_id}\n{render_prompt(p)}\n\n"
                        for p in prompts), encoding="utf-8")
        return

    be = _make_backend(backend, model, script, base_url, api_key_env)
    backends = {a.backend_id: be for a in roster}
    try:
        result = run_task(task, plan, roster, backends, config, clock=fixed_clock(clock) if clock else None)
    except RunAborted as exc:
        if out:
            partial = RunResult("", None, exc.transcript, [], {}, [str(exc)])
            write_run_artifacts(partial, out, config, task, plan, status="aborted")
        raise
    if out:
        for path in write_run_artifacts(result, out, config, task, plan):
            click.echo(f"wrote {path}")
    else:
        click.echo(json.dumps(run_metadata(result, config, task, plan), indent=2))
    for w in result.warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(result.final_output)


@cli.group("eval")
def eval_group() -> None:
    """Survey rating ingestion and reporting."""


@eval_group.command("ingest")
@click.argument("ratings", type=click.Path(exists=True, dir_okay=False))
@click.option("--half-steps", is_flag=True, help="Accept half-step overall ratings.")
@_guard
def cmd_eval_ingest(ratings: str, half_steps: bool) -> None:
    records = ingest_ratings(ratings, half_steps)
    variants = sorted({r.variant_id for r in records})
    click.echo(f"ok: {len(records)} records, {len(variants)} variants ({', '.join(variants)})")


@eval_group.command("report")
@click.argument("ratings", type=click.Path(exists=True, dir_okay=False))
@click.option("--half-steps", is_flag=True, help="Accept half-step overall ratings.")
@click.option("--distribution", is_flag=True, help="Also print per-statement score counts.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the table to this file.")
@_guard
def cmd_eval_report(ratings: str, half_steps: bool, distribution: bool, out: str | None) -> None:
    reports = compute_reports(ingest_ratings(ratings, half_steps))
    table = render_table(reports)
    if out:
        Path(out).write_text(table, encoding="utf-8")
    click.echo(table, nl=False)
    if distribution:
        for r in reports:
            click.echo()
            click.echo(render_distribution(r), nl=False)


@cli.group("survey")
def survey_group() -> None:
    """Questionnaire generation."""


@survey_group.command("export")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Story file with originals and improved versions.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_guard
def cmd_survey_export(corpus: str, out: str) -> None:
    doc = export_survey(load_story_corpus(corpus), out)
    click.echo(f"wrote {out}: {doc.rating_count} rating questions, {doc.open_count} open-ended questions")


def main() -> None:
    cli(prog_name="alas")


if __name__ == "__main__":
    main()
