"""Tasks, context documents and subtask plans."""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .backends import Backend, ChatMessage, CompletionRequest
from .errors import DataError, ParseError
from .profiles import Roster
from .stories import Narrative, UserStory, render_story

logger = logging.getLogger(__name__)

STORY_FENCE = ("===STORY BEGIN===", "===STORY END===")


class DocKind(str, enum.Enum):
    MVP = "MVP"
    VISION_NABC = "VisionNABC"
    OTHER = "Other"


@dataclass(frozen=True)
class ContextDocument:
    kind: DocKind
    title: str
    body: str
    elision_rank: int = 0
    label: str | None = None  # only for DocKind.OTHER

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DocKind(self.kind))
        if not self.body.strip():
            raise ValueError(f"context document {self.title!r} has an empty body")
        if self.elision_rank < 0:
            raise ValueError("elision_rank must be non-negative")


@dataclass(frozen=True)
class NabcVision:
    needs: str
    approach: str
    benefit: str
    competition: str

    def __post_init__(self) -> None:
        for name in ("needs", "approach", "benefit", "competition"):
            if not getattr(self, name).strip():
                raise ValueError(f"NABC field {name!r} must be non-empty")

    def to_document(self, title: str = "Product vision (NABC)", elision_rank: int = 0) -> ContextDocument:
        body = "\n".join([
            f"Needs: {self.needs}",
            f"Approach: {self.approach}",
            f"Benefit: {self.benefit}",
            f"Competition: {self.competition}",
        ])
        return ContextDocument(DocKind.VISION_NABC, title, body, elision_rank)


@dataclass(frozen=True)
class Task:
    task_id: str
    description: str
    expected_outcome: str
    context_documents: tuple[ContextDocument, ...] = ()
    input_stories: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "context_documents", tuple(self.context_documents))
        object.__setattr__(self, "input_stories", tuple(self.input_stories))
        if not self.description.strip():
            raise ValueError("task description must be non-empty")
        if not self.expected_outcome.strip():
            raise ValueError("task expected_outcome must be non-empty")
        ranks = [d.elision_rank for d in self.context_documents]
        if len(set(ranks)) != len(ranks):
            raise ValueError("context document elision ranks must be unique within a task")


@dataclass(frozen=True)
class Subtask:
    index: int
    name: str
    instruction: str
    responsible_agent_id: str


@dataclass(frozen=True)
class Plan:
    subtasks: tuple[Subtask, ...] = ()
    # Backend calls spent producing this plan; not part of its identity.
    attempts: int = field(default=1, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "subtasks", tuple(self.subtasks))

    def __len__(self) -> int:
        return len(self.subtasks)

    def __iter__(self):
        return iter(self.subtasks)


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    index: int | None = None

    def __str__(self) -> str:
        where = f"subtask {self.index}: " if self.index is not None else ""
        return f"{where}{self.message} [{self.rule}]"


class PlanGenerationFailed(DataError):
    def __init__(self, attempts: int, last_violations: list[Violation]):
        self.attempts = attempts
        self.last_violations = last_violations
        detail = "; ".join(str(v) for v in last_violations)
        super().__init__(f"no valid plan after {attempts} attempts: {detail}")


def validate_plan(plan: Plan, roster: Roster) -> list[Violation]:
    out = []
    indices = [s.index for s in plan.subtasks]
    if indices != list(range(1, len(indices) + 1)):
        out.append(Violation("contiguous-indices",
                             f"non-contiguous indices {indices}; expected 1..{len(indices)}"))
    for s in plan.subtasks:
        if s.responsible_agent_id not in roster:
            out.append(Violation("known-agent", f"unknown agent {s.responsible_agent_id!r}", s.index))
        if not s.instruction.strip():
            out.append(Violation("non-empty-instruction", "instruction is empty", s.index))
        if not s.name.strip():
            out.append(Violation("non-empty-name", "name is empty", s.index))
    return out


def plan_warnings(plan: Plan, roster: Roster) -> list[str]:
    out = []
    if len(plan) <= roster.k:
        out.append(f"plan has {len(plan)} subtasks for {roster.k} agents; follow-up prompts never occur")
    unused = set(roster.ids) - {s.responsible_agent_id for s in plan}
    if unused:
        out.append(f"agents never assigned a subtask: {sorted(unused)}")
    return out


# -- plan wire format ----------------------------------------------------------
#   <index>. [<agent_id>] <name>: <instruction>

_PLAN_LINE = re.compile(r"^(?P<index>\d+)\. \[(?P<agent>[^\]\s]+)\] (?P<name>[^:\n]+?): (?P<instruction>.+)$")
_NUMBERED = re.compile(r"^\s*\d+\.")


def format_subtask(s: Subtask) -> str:
    return f"{s.index}. [{s.responsible_agent_id}] {s.name}: {s.instruction}"


def dumps_plan(plan: Plan) -> str:
    return "".join(format_subtask(s) + "\n" for s in plan.subtasks)


def parse_plan(text: str) -> tuple[Plan, list[Violation]]:
    """Pull plan lines out of free text.

    Lines that do not start with a number are ignored, so a model may surround
    the plan with commentary. Numbered lines that miss the grammar are
    reported as violations.
    """
    subtasks = []
    problems = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip()
        m = _PLAN_LINE.match(line.strip())
        if m:
            subtasks.append(Subtask(int(m["index"]), m["name"].strip(), m["instruction"].strip(), m["agent"]))
        elif _NUMBERED.match(line):
            problems.append(Violation("wire-format", f"line {lineno} does not match "
                                      "'<index>. [<agent_id>] <name>: <instruction>'"))
    if not subtasks:
        problems.append(Violation("wire-format", "no plan lines found"))
    return Plan(tuple(subtasks)), problems


def loads_plan(text: str, path: str | None = None) -> Plan:
    """Strict parser for plan files: every non-blank line must be a plan line."""
    subtasks = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        m = _PLAN_LINE.match(line)
        if not m:
            raise ParseError("not a plan line", f"line {lineno}", path)
        subtasks.append(Subtask(int(m["index"]), m["name"], m["instruction"], m["agent"]))
    return Plan(tuple(subtasks))


def load_plan(path: str | Path) -> Plan:
    return loads_plan(Path(path).read_text(encoding="utf-8"), str(path))


def save_plan(plan: Plan, path: str | Path) -> None:
    Path(path).write_text(dumps_plan(plan), encoding="utf-8")


# -- plan generation -----------------------------------------------------------

PLANNER_SYSTEM = (
    "You are an experienced agile coach who plans how a small team of AI agents "
    "collaborates on a task. You break the task into small, manageable subtasks "
    "and assign exactly one responsible agent to each."
)


def planner_prompt(task: Task, roster: Roster, violations: list[Violation] | None = None) -> CompletionRequest:
    agents = "\n".join(
        f"- {a.agent_id}: {a.role_name}. {a.responsibilities[0] if a.responsibilities else ''}".rstrip()
        for a in roster
    )
    parts = [
        f"Task:\n{task.description}",
        f"Expected outcome:\n{task.expected_outcome}",
        f"Agents:\n{agents}",
        "Write the plan as numbered lines, one subtask per line, exactly in this form:\n"
        "<index>. [<agent_id>] <name>: <instruction>\n"
        "Number the subtasks 1, 2, 3, ... without gaps and use only the agent ids listed above. "
        "The last subtask must produce the final result.",
        "After the plan, write a section 'Key facts:' listing the facts from the task description "
        "that the plan relies on, so the plan can be checked against the task.",
    ]
    if violations:
        parts.append("Your previous plan was rejected for these reasons:\n"
                     + "\n".join(f"- {v}" for v in violations)
                     + "\nWrite a corrected plan.")
    return CompletionRequest(
        (ChatMessage("system", PLANNER_SYSTEM), ChatMessage("user", "\n\n".join(parts))),
        temperature=1.0,
    )


def generate_plan(task: Task, roster: Roster, planner_backend: Backend, max_attempts: int = 3,
                  temperature: float = 1.0) -> Plan:
    """Ask a model for a plan, re-prompting with the violations until it validates.

    Backend errors propagate unchanged.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    violations: list[Violation] = []
    for attempt in range(1, max_attempts + 1):
        req = planner_prompt(task, roster, violations)
        req = CompletionRequest(req.messages, temperature, req.max_tokens)
        reply = planner_backend.complete(req)
        plan, violations = parse_plan(reply.text)
        violations += validate_plan(plan, roster) if plan.subtasks else []
        if not violations:
            logger.info("plan accepted on attempt %d", attempt)
            return Plan(plan.subtasks, attempts=attempt)
        logger.warning("plan attempt %d rejected: %s", attempt, "; ".join(map(str, violations)))
    raise PlanGenerationFailed(max_attempts, violations)


# -- task file format ----------------------------------------------------------

def task_to_record(task: Task) -> dict[str, Any]:
    return {
        "task_id": task.task_id,
        "description": task.description,
        "expected_outcome": task.expected_outcome,
        "context_documents": [
            {"kind": d.kind.value, "label": d.label, "title": d.title, "body": d.body,
             "elision_rank": d.elision_rank}
            for d in task.context_documents
        ],
        "input_stories": list(task.input_stories),
    }


def task_from_record(rec: Any, path: str | None = None) -> Task:
    if not isinstance(rec, dict):
        raise ParseError("task must be an object", "line 1", path)
    try:
        docs = []
        for i, d in enumerate(rec.get("context_documents", [])):
            if not isinstance(d, dict):
                raise ParseError("context document must be an object", f"context_documents[{i}]", path)
            docs.append(ContextDocument(d["kind"], d["title"], d["body"], d.get("elision_rank", i), d.get("label")))
        return Task(rec["task_id"], rec["description"], rec["expected_outcome"], tuple(docs),
                    tuple(rec.get("input_stories", [])))
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}", None, path) from exc
    except (ValueError, TypeError, AttributeError) as exc:
        raise ParseError(str(exc), None, path) from exc


def dumps_task(task: Task) -> str:
    return json.dumps(task_to_record(task), indent=2, ensure_ascii=False) + "\n"


def save_task(task: Task, path: str | Path) -> None:
    Path(path).write_text(dumps_task(task), encoding="utf-8")


def load_task(path: str | Path) -> Task:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}", str(path)) from exc
    return task_from_record(data, str(path))


# -- builtin demo --------------------------------------------------------------

DEMO_MVP = """\
Mobile Delivery is an app for postal delivery staff running on a rugged handheld device.
Basic features of the first release:
1. Log in with a personal staff account and start a delivery shift.
2. Load the day's route and the list of parcels assigned to the tour.
3. Scan parcel barcodes when loading the vehicle and at the doorstep.
4. Capture the recipient's signature or record a safe-place drop.
5. Pair the handheld with a portable Bluetooth label printer and print delivery notices.
6. Work offline and synchronize scans and signatures when the network returns."""

DEMO_VISION = NabcVision(
    needs="Delivery staff lose time with paper notices, manual lists and unreliable device pairing; "
          "recipients expect accurate delivery status.",
    approach="One handheld app that guides the tour, scans every parcel, prints notices on a mobile "
             "printer and syncs the status in near real time.",
    benefit="Shorter tours, fewer failed deliveries and a complete digital proof of delivery.",
    competition="Generic courier apps do not integrate the postal back-end systems or the printers "
                "already used by the staff.",
)


def demo_stories() -> list[UserStory]:
    return [
        UserStory(
            id="US1",
            title="Connect mobile printer",
            narrative=Narrative(
                "delivery person",
                "to synchronize my mobile device with the mobile printer",
                "I can print labels",
            ),
            description="As a delivery person, I want to synchronize my mobile device with the mobile "
                        "printer so that I can print labels.",
            acceptance_criteria=(
                "The printer can be selected in the app.",
                "A test label can be printed.",
            ),
        ),
        UserStory(
            id="US2",
            title="Record safe-place drop",
            narrative=Narrative(
                "delivery person",
                "to record where I left a parcel when nobody is at home",
                "the recipient can find it",
            ),
            description="As a delivery person, I want to record where I left a parcel when nobody is at "
                        "home so that the recipient can find it.",
            acceptance_criteria=(
                "A location can be chosen.",
                "The recipient is informed.",
            ),
        ),
    ]


def story_improvement_task(story: UserStory, task_id: str | None = None,
                           context_documents: tuple[ContextDocument, ...] | None = None) -> Task:
    """Task asking the agents to improve one user story."""
    description = (
        "Improve the quality of the user story below and ensure alignment with the organizational "
        "standards for requirements engineering. The story must become clear, complete, correct, "
        "consistent and testable, and it must stay relevant to the functionality of the product and "
        "its business objectives.\n\n"
        f"User story:\n{render_story(story)}"
    )
    if context_documents is None:
        context_documents = (
            ContextDocument(DocKind.MVP, "Minimum viable product", DEMO_MVP, elision_rank=0),
            DEMO_VISION.to_document(elision_rank=1),
        )
    return Task(
        task_id=task_id or f"improve-{story.id}",
        description=description,
        expected_outcome="An improved version of the user story with a narrative in the form "
                         "'As a <role>, I want <requirement> so that <benefit>' and measurable "
                         "acceptance criteria.",
        context_documents=context_documents,
        input_stories=(story.id,),
    )


def _final_instruction() -> str:
    begin, end = STORY_FENCE
    template = ('{"id": "<story id>", "title": "...", "role": "...", "requirement": "...", '
                '"benefit": "...", "description": "...", "acceptance_criteria": ["...", "..."]}')
    return (f"Write the final improved user story as a single JSON object between a line "
            f"'{begin}' and a line '{end}', using the fields {template}.")


def demo_plan() -> Plan:
    return Plan((
        Subtask(1, "Present the story", "Present the user story to the team and explain how it relates "
                "to the MVP features and the product vision.", "po"),
        Subtask(2, "Analyze the user story", "Analyze the user story against the INVEST characteristics "
                "and list every ambiguity, missing detail and untestable acceptance criterion.", "re"),
        Subtask(3, "Assess business value", "Assess the analysis from the business side and state which "
                "changes matter most for the value of the story.", "po"),
        Subtask(4, "Rewrite the story", "Rewrite the narrative and the acceptance criteria to address the "
                "findings, keeping every criterion measurable.", "re"),
        Subtask(5, "Review the rewrite", "Review the rewritten story for scope, size and alignment with "
                "the product strategy and request any final changes.", "po"),
        Subtask(6, "Finalize the story", "Apply the review comments. " + _final_instruction(), "re"),
    ))


def builtin_demo_task() -> tuple[Task, Plan]:
    return story_improvement_task(demo_stories()[0], task_id="demo-us1"), demo_plan()
