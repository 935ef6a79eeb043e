"""Task conduction: run a plan subtask by subtask against the agents' backends."""

from __future__ import annotations

import json
import logging
import re
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .backends import Backend, BackendError, CompletionRequest, TransportError
from .errors import DataError, ParseError
from .knowledge import Clock, EntryKind, KnowledgeBase, dumps_transcript, init_kb
from .profiles import Roster
from .prompts import (
    FOLLOWUP_SHAPE,
    INITIAL_SHAPE,
    LABEL_BY_HEADER,
    Prompt,
    TokenBudget,
    check_budget,
    compose_followup,
    compose_initial,
    elide_to_fit,
    render_prompt,
    to_messages,
)
from .stories import Provenance, UserStory, dump_story, story_from_record
from .tasks import STORY_FENCE, Plan, Task, validate_plan

logger = logging.getLogger(__name__)

PLACEHOLDER_RESPONSE = "(prior response placeholder)"


class FenceMissing(DataError):
    pass


class EmptyResponse(TransportError):
    """The backend returned blank text; retried like a transport failure."""


class RunAborted(BackendError):
    """A subtask could not be completed. ``transcript`` holds everything up to the failure."""

    def __init__(self, subtask_index: int, cause: BaseException, transcript: KnowledgeBase, attempts: int):
        self.subtask_index = subtask_index
        self.cause = cause
        self.transcript = transcript
        self.attempts = attempts
        super().__init__(f"subtask {subtask_index} failed after {attempts} attempt(s): {cause}")


@dataclass(frozen=True)
class RunConfig:
    temperature: float = 1.0
    max_retries: int = 3
    backoff_base: float = 1.0
    output_fence: tuple[str, str] = STORY_FENCE
    dry_run: bool = False
    version_label: str = "v.1"
    token_divisor: int = 4

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def to_record(self) -> dict:
        return {
            "temperature": self.temperature,
            "max_retries": self.max_retries,
            "backoff_base": self.backoff_base,
            "output_fence": list(self.output_fence),
            "dry_run": self.dry_run,
            "version_label": self.version_label,
            "token_divisor": self.token_divisor,
        }


@dataclass(frozen=True)
class SubtaskUsage:
    subtask_index: int
    agent_id: str
    prompt_tokens_est: int
    completion_tokens: int | None
    retries: int
    dropped_context: tuple[str, ...] = ()


@dataclass
class RunResult:
    final_output: str
    improved_story: UserStory | None
    transcript: KnowledgeBase
    per_subtask_usage: list[SubtaskUsage]
    model_tags: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


# -- fenced story extraction -----------------------------------------------------

def _fenced_blocks(text: str, fence: tuple[str, str]) -> list[str]:
    begin, end = (re.escape(f) for f in fence)
    return re.findall(rf"^[ \t]*{begin}[ \t]*\n(.*?)^[ \t]*{end}[ \t]*$", text, re.MULTILINE | re.DOTALL)


def _strip_code_fence(block: str) -> str:
    # Models often wrap JSON in a markdown code fence inside our fence.
    m = re.fullmatch(r"\s*```[a-zA-Z]*\n(.*?)\n?```\s*", block, re.DOTALL)
    return m.group(1) if m else block


def _extract(final_output: str, fence: tuple[str, str], model_tag: str, version_label: str,
             story_id: str | None) -> tuple[UserStory, list[str]]:
    notes = []
    blocks = _fenced_blocks(final_output, fence)
    if not blocks:
        raise FenceMissing(f"no block between {fence[0]!r} and {fence[1]!r}")
    if len(blocks) > 1:
        notes.append(f"{len(blocks)} fenced story blocks found; using the last one")
    body = _strip_code_fence(blocks[-1])
    try:
        rec = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} of fenced block") from exc
    if isinstance(rec, dict):
        rec = dict(rec)
        rec.pop("provenance", None)
        if story_id is not None:
            rec["id"] = story_id
    story = story_from_record(rec, "fenced block")
    story = UserStory(story.id, story.title, story.narrative, story.description,
                      story.acceptance_criteria, Provenance.improved(model_tag, version_label))
    return story, notes


def extract_improved_story(final_output: str, fence: tuple[str, str] = STORY_FENCE, model_tag: str = "unknown",
                           version_label: str = "v.1", story_id: str | None = None) -> UserStory:
    """Parse the story document in the last fenced block of ``final_output``."""
    story, notes = _extract(final_output, fence, model_tag, version_label, story_id)
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return story


# -- running -----------------------------------------------------------------------

class _Composer:
    """Tracks which agents have been contacted and builds the next prompt."""

    def __init__(self, task: Task, roster: Roster):
        self.task = task
        self.roster = roster
        self.contacted: set[str] = set()

    def next_prompt(self, subtask, prior: str | None) -> Prompt:
        agent = subtask.responsible_agent_id
        if agent not in self.contacted:
            self.contacted.add(agent)
            return compose_initial(self.roster.get(agent), self.task, subtask)
        return compose_followup(subtask, prior if prior is not None else "")


def _fit(prompt: Prompt, task: Task, budget: TokenBudget | None) -> Prompt:
    if budget is None or check_budget(prompt, budget).fits:
        return prompt
    return elide_to_fit(prompt, task, budget)


def dry_run(task: Task, plan: Plan, roster: Roster, config: RunConfig | None = None,
            budget: TokenBudget | None = None) -> list[Prompt]:
    """The prompts a run would issue, with placeholder text standing in for responses."""
    composer = _Composer(task, roster)
    prior = None
    prompts = []
    for subtask in plan.subtasks:
        prompts.append(_fit(composer.next_prompt(subtask, prior), task, budget))
        prior = PLACEHOLDER_RESPONSE
    return prompts


def _resolve_backends(roster: Roster, backends: Mapping[str, Backend]) -> dict[str, Backend]:
    out = {}
    for a in roster:
        if a.backend_id not in backends:
            raise DataError(f"agent {a.agent_id!r} uses unknown backend {a.backend_id!r}")
        out[a.agent_id] = backends[a.backend_id]
    return out


def _call_with_retry(backend: Backend, request: CompletionRequest, config: RunConfig,
                     sleep: Callable[[float], None]):
    retries = 0
    while True:
        try:
            result = backend.complete(request)
            if not result.text.strip():
                raise EmptyResponse("backend returned an empty response")
            return result, retries
        except BackendError as exc:
            if not exc.retryable or retries >= config.max_retries:
                exc.attempts = retries + 1
                raise
            delay = config.backoff_base * (2 ** retries)
            logger.warning("retryable backend error (%s); retry %d in %.2fs", exc, retries + 1, delay)
            retries += 1
            sleep(delay)


def run_task(task: Task, plan: Plan, roster: Roster, backends: Mapping[str, Backend],
             config: RunConfig | None = None, clock: Clock | None = None,
             sleep: Callable[[float], None] = time.sleep) -> RunResult:
    """Execute every subtask in order and collect the transcript.

    The first prompt to each agent is an initial prompt; later ones are
    follow-ups built from the latest response. Transport failures and empty
    replies are retried with exponential backoff; on final failure
    :class:`RunAborted` carries the partial transcript.
    """
    config = config or RunConfig()
    violations = validate_plan(plan, roster)
    if violations:
        raise DataError("invalid plan: " + "; ".join(map(str, violations)))
    by_agent = _resolve_backends(roster, backends)

    kb = init_kb(task, clock)
    composer = _Composer(task, roster)
    usage: list[SubtaskUsage] = []
    for subtask in plan.subtasks:
        agent = subtask.responsible_agent_id
        backend = by_agent[agent]
        budget = TokenBudget.for_model(backend.model_spec, config.token_divisor)
        prior = kb.latest_response() if kb.responses() else None
        prompt = _fit(composer.next_prompt(subtask, prior), task, budget)
        request = CompletionRequest(to_messages(prompt), config.temperature, backend.model_spec.max_output)

        kb.append(EntryKind.SUBTASK_ISSUED, render_prompt(prompt), subtask.index, agent)
        try:
            result, retries = _call_with_retry(backend, request, config, sleep)
        except BackendError as exc:
            raise RunAborted(subtask.index, exc, kb, getattr(exc, "attempts", 1)) from exc
        kb.append(EntryKind.AGENT_RESPONSE, result.text, subtask.index, agent)
        usage.append(SubtaskUsage(subtask.index, agent, check_budget(prompt, budget).estimated_tokens,
                                  result.completion_tokens, retries, prompt.dropped_context))

    final_output = kb.latest_response() if plan.subtasks else ""
    model_tags = {a.agent_id: by_agent[a.agent_id].model_spec.model_tag for a in roster}
    notes = []
    improved = None
    if plan.subtasks:
        last_agent = plan.subtasks[-1].responsible_agent_id
        story_id = task.input_stories[0] if len(task.input_stories) == 1 else None
        try:
            improved, notes = _extract(final_output, config.output_fence, model_tags[last_agent],
                                       config.version_label, story_id)
        except (FenceMissing, ParseError) as exc:
            notes.append(f"no improved story extracted: {exc}")
    for note in notes:
        logger.warning(note)
    return RunResult(final_output, improved, kb, usage, model_tags, notes)


# -- trace checking ------------------------------------------------------------------

def prompt_shape(rendered: str) -> tuple:
    """Segment labels of a rendered prompt, recovered from its header lines."""
    shape = []
    lines = rendered.split("\n")
    for i, line in enumerate(lines):
        if line in LABEL_BY_HEADER and (i == 0 or lines[i - 1] == ""):
            shape.append(LABEL_BY_HEADER[line])
    return tuple(shape)


def check_trace(kb: KnowledgeBase) -> list[str]:
    """Formula conformance: first prompt per agent is 4-segment, later ones 2-segment."""
    problems = []
    seen = set()
    for e in kb.issued():
        expected = FOLLOWUP_SHAPE if e.agent_id in seen else INITIAL_SHAPE
        seen.add(e.agent_id)
        got = prompt_shape(e.content)
        if got != expected:
            problems.append(f"subtask {e.subtask_index} ({e.agent_id}): expected "
                            f"{[x.value for x in expected]}, got {[x.value for x in got]}")
    indices = [e.subtask_index for e in kb.issued()]
    if indices != list(range(1, len(indices) + 1)):
        problems.append(f"subtasks issued out of order: {indices}")
    return problems


# -- artifacts --------------------------------------------------------------------

TRANSCRIPT_FILE = "transcript.jsonl"
METADATA_FILE = "run_meta.json"
IMPROVED_FILE = "improved_story.json"


def run_metadata(result: RunResult, config: RunConfig, task: Task, plan: Plan, status: str = "completed") -> dict:
    return {
        "status": status,
        "task_id": task.task_id,
        "subtasks": len(plan),
        "model_tags": result.model_tags,
        "config": config.to_record(),
        "usage": [
            {
                "subtask_index": u.subtask_index,
                "agent_id": u.agent_id,
                "prompt_tokens_est": u.prompt_tokens_est,
                "completion_tokens": u.completion_tokens,
                "retries": u.retries,
                "dropped_context": list(u.dropped_context),
            }
            for u in result.per_subtask_usage
        ],
        "improved_story": result.improved_story.variant_id if result.improved_story else None,
        "warnings": result.warnings,
    }


def write_run_artifacts(result: RunResult, out_dir: str | Path, config: RunConfig, task: Task,
                        plan: Plan, status: str = "completed") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / TRANSCRIPT_FILE, out_dir / METADATA_FILE]
    written[0].write_text(dumps_transcript(result.transcript), encoding="utf-8")
    meta = run_metadata(result, config, task, plan, status)
    written[1].write_text(json.dumps(meta, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    if result.improved_story is not None:
        p = out_dir / IMPROVED_FILE
        p.write_text(dump_story(result.improved_story), encoding="utf-8")
        written.append(p)
    return written
