"""Prompt composition for initial and follow-up prompts, with token budgeting.

An agent's first prompt carries four segments (profile, task, context,
subtask); every later prompt carries the subtask plus the previous response.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

from .backends import ChatMessage, ModelSpec
from .errors import AlasError, DataError
from .profiles import AgentProfile, render_profile
from .tasks import Subtask, Task

NO_CONTEXT = "(no additional context)"
SEPARATOR = "\n\n"


class Label(str, enum.Enum):
    PROFILE = "Profile"
    TASK_DESCRIPTION = "TaskDescription"
    CONTEXT = "Context"
    SUBTASK_INSTRUCTION = "SubtaskInstruction"
    PRIOR_RESPONSE = "PriorResponse"

    @property
    def header(self) -> str:
        return HEADERS[self]


HEADERS = {
    Label.PROFILE: "== PROFILE ==",
    Label.TASK_DESCRIPTION: "== TASK ==",
    Label.CONTEXT: "== CONTEXT ==",
    Label.SUBTASK_INSTRUCTION: "== SUBTASK ==",
    Label.PRIOR_RESPONSE: "== PRIOR RESPONSE ==",
}
LABEL_BY_HEADER = {v: k for k, v in HEADERS.items()}

INITIAL_SHAPE = (Label.PROFILE, Label.TASK_DESCRIPTION, Label.CONTEXT, Label.SUBTASK_INSTRUCTION)
FOLLOWUP_SHAPE = (Label.SUBTASK_INSTRUCTION, Label.PRIOR_RESPONSE)


class EmptyPriorResponse(DataError):
    pass


class BudgetUnsatisfiable(AlasError):
    pass


@dataclass(frozen=True)
class Segment:
    label: Label
    text: str

    def render(self) -> str:
        return f"{self.label.header}\n{self.text}"


@dataclass(frozen=True)
class Prompt:
    segments: tuple[Segment, ...]
    target_agent_id: str
    subtask_index: int
    dropped_context: tuple[str, ...] = field(default=())

    @property
    def labels(self) -> tuple[Label, ...]:
        return tuple(s.label for s in self.segments)

    @property
    def is_initial(self) -> bool:
        return self.labels == INITIAL_SHAPE

    def segment(self, label: Label) -> Segment:
        for s in self.segments:
            if s.label is label:
                return s
        raise KeyError(label)


def render_prompt(p: Prompt) -> str:
    return SEPARATOR.join(s.render() for s in p.segments)


def to_messages(p: Prompt) -> tuple[ChatMessage, ...]:
    """Profile goes to the system message; everything else to one user message."""
    rest = [s for s in p.segments if s.label is not Label.PROFILE]
    msgs = []
    if len(rest) != len(p.segments):
        msgs.append(ChatMessage("system", p.segment(Label.PROFILE).text))
    msgs.append(ChatMessage("user", SEPARATOR.join(s.render() for s in rest)))
    return tuple(msgs)


def task_text(task: Task) -> str:
    return f"{task.description}\n\nExpected outcome:\n{task.expected_outcome}"


def context_text(task: Task, dropped: tuple[str, ...] = ()) -> str:
    docs = sorted((d for d in task.context_documents if d.title not in dropped), key=lambda d: d.elision_rank)
    if not docs:
        return NO_CONTEXT
    return SEPARATOR.join(f"### {d.title}\n{d.body}" for d in docs)


def subtask_text(subtask: Subtask) -> str:
    return f"Subtask {subtask.index}: {subtask.name}\n{subtask.instruction}"


def compose_initial(profile: AgentProfile, task: Task, subtask: Subtask) -> Prompt:
    if subtask.responsible_agent_id != profile.agent_id:
        raise ValueError(f"subtask {subtask.index} belongs to {subtask.responsible_agent_id!r}, "
                         f"not {profile.agent_id!r}")
    return Prompt(
        (
            Segment(Label.PROFILE, render_profile(profile)),
            Segment(Label.TASK_DESCRIPTION, task_text(task)),
            Segment(Label.CONTEXT, context_text(task)),
            Segment(Label.SUBTASK_INSTRUCTION, subtask_text(subtask)),
        ),
        profile.agent_id,
        subtask.index,
    )


def compose_followup(subtask: Subtask, prior_response: str) -> Prompt:
    if not prior_response or not prior_response.strip():
        raise EmptyPriorResponse(f"subtask {subtask.index}: prior response is empty")
    return Prompt(
        (Segment(Label.SUBTASK_INSTRUCTION, subtask_text(subtask)),
         Segment(Label.PRIOR_RESPONSE, prior_response)),
        subtask.responsible_agent_id,
        subtask.index,
    )


# -- budgeting -----------------------------------------------------------------

@dataclass(frozen=True)
class TokenBudget:
    context_window: int
    max_output: int
    divisor: int = 4

    def __post_init__(self) -> None:
        if not (self.context_window > self.max_output > 0):
            raise ValueError("TokenBudget needs context_window > max_output > 0")
        if self.divisor < 1:
            raise ValueError("divisor must be >= 1")

    @classmethod
    def for_model(cls, spec: ModelSpec, divisor: int = 4) -> "TokenBudget":
        return cls(spec.context_window, spec.max_output, divisor)

    @property
    def available(self) -> int:
        return self.context_window - self.max_output

    def estimate(self, text: str) -> int:
        return math.ceil(len(text) / self.divisor)


@dataclass(frozen=True)
class BudgetReport:
    estimated_tokens: int
    available: int
    fits: bool
    per_segment: tuple[tuple[Label, int], ...]


def check_budget(p: Prompt, b: TokenBudget) -> BudgetReport:
    """Estimate the prompt size from its rendered text, headers included."""
    est = b.estimate(render_prompt(p))
    per_segment = tuple((s.label, b.estimate(s.render())) for s in p.segments)
    return BudgetReport(est, b.available, est <= b.available, per_segment)


def elide_to_fit(p: Prompt, task: Task, b: TokenBudget) -> Prompt:
    """Drop context documents, highest elision rank first, until the prompt fits.

    Only the context segment is rebuilt. Raises BudgetUnsatisfiable when the
    prompt is still too large with every document dropped.
    """
    if check_budget(p, b).fits:
        warnings.warn("elide_to_fit called on a prompt that already fits; returned unchanged",
                      stacklevel=2)
        return p
    if Label.CONTEXT not in p.labels:
        raise BudgetUnsatisfiable(f"subtask {p.subtask_index}: prompt exceeds budget and has no context to drop")

    dropped = list(p.dropped_context)
    remaining = sorted((d for d in task.context_documents if d.title not in dropped),
                       key=lambda d: d.elision_rank, reverse=True)
    for doc in remaining:
        dropped.append(doc.title)
        segments = tuple(
            Segment(Label.CONTEXT, context_text(task, tuple(dropped))) if s.label is Label.CONTEXT else s
            for s in p.segments
        )
        candidate = Prompt(segments, p.target_agent_id, p.subtask_index, tuple(dropped))
        if check_budget(candidate, b).fits:
            return candidate
    report = check_budget(candidate if remaining else p, b)
    raise BudgetUnsatisfiable(
        f"subtask {p.subtask_index}: {report.estimated_tokens} tokens estimated with all context "
        f"dropped, {report.available} available"
    )
