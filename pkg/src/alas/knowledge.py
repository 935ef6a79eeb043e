"""Append-only shared record of a run: the task, each issued subtask, each response."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator

from .errors import AlasError, InvariantViolation, ParseError
from .tasks import Task

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def fixed_clock(instant: datetime | str) -> Clock:
    if isinstance(instant, str):
        instant = datetime.fromisoformat(instant)
    return lambda: instant


class EntryKind(str, enum.Enum):
    TASK_DESCRIPTION = "TaskDescription"
    SUBTASK_ISSUED = "SubtaskIssued"
    AGENT_RESPONSE = "AgentResponse"


class OrderingViolation(InvariantViolation):
    pass


class NoResponseYet(AlasError):
    pass


@dataclass(frozen=True)
class KnowledgeBaseEntry:
    seq: int
    kind: EntryKind
    content: str
    token_estimate: int
    timestamp: str
    subtask_index: int | None = None
    agent_id: str | None = None

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind.value,
            "subtask_index": self.subtask_index,
            "agent_id": self.agent_id,
            "content": self.content,
            "token_estimate": self.token_estimate,
            "timestamp": self.timestamp,
        }


def estimate_tokens(text: str, divisor: int = 4) -> int:
    return math.ceil(len(text) / divisor)


class KnowledgeBase:
    """Entries can be appended, never changed or removed."""

    def __init__(self, clock: Clock | None = None):
        self._entries: list[KnowledgeBaseEntry] = []
        self._clock = clock or utc_now

    @property
    def entries(self) -> tuple[KnowledgeBaseEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[KnowledgeBaseEntry]:
        return iter(tuple(self._entries))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return self._entries == other._entries

    def _check(self, kind: EntryKind, subtask_index: int | None, agent_id: str | None) -> None:
        prev = self._entries[-1] if self._entries else None
        if kind is EntryKind.TASK_DESCRIPTION:
            if prev is not None:
                raise OrderingViolation("TaskDescription may only be the first entry")
            return
        if prev is None:
            raise OrderingViolation(f"first entry must be TaskDescription, got {kind.value}")
        if subtask_index is None or agent_id is None:
            raise OrderingViolation(f"{kind.value} needs a subtask_index and agent_id")
        if kind is EntryKind.SUBTASK_ISSUED:
            if prev.kind is EntryKind.SUBTASK_ISSUED:
                raise OrderingViolation(
                    f"subtask {subtask_index} issued while subtask {prev.subtask_index} has no response"
                )
            return
        # AgentResponse
        if prev.kind is not EntryKind.SUBTASK_ISSUED:
            raise OrderingViolation(f"response to subtask {subtask_index} without a matching SubtaskIssued")
        if (prev.subtask_index, prev.agent_id) != (subtask_index, agent_id):
            raise OrderingViolation(
                f"response ({subtask_index}, {agent_id}) does not match issued "
                f"({prev.subtask_index}, {prev.agent_id})"
            )

    def append(self, kind: EntryKind | str, content: str, subtask_index: int | None = None,
               agent_id: str | None = None) -> int:
        kind = EntryKind(kind)
        self._check(kind, subtask_index, agent_id)
        entry = KnowledgeBaseEntry(
            seq=len(self._entries) + 1,
            kind=kind,
            content=content,
            token_estimate=estimate_tokens(content),
            timestamp=self._clock().isoformat(),
            subtask_index=subtask_index,
            agent_id=agent_id,
        )
        self._entries.append(entry)
        return entry.seq

    def latest_response(self) -> str:
        for e in reversed(self._entries):
            if e.kind is EntryKind.AGENT_RESPONSE:
                return e.content
        raise NoResponseYet("no agent response recorded yet")

    def responses(self) -> list[KnowledgeBaseEntry]:
        return [e for e in self._entries if e.kind is EntryKind.AGENT_RESPONSE]

    def issued(self) -> list[KnowledgeBaseEntry]:
        return [e for e in self._entries if e.kind is EntryKind.SUBTASK_ISSUED]

    @classmethod
    def from_entries(cls, entries: list[KnowledgeBaseEntry], clock: Clock | None = None) -> "KnowledgeBase":
        """Rebuild a knowledge base, re-checking every invariant."""
        kb = cls(clock)
        for pos, e in enumerate(entries, 1):
            if e.seq != pos:
                raise InvariantViolation(f"entry {pos} has seq {e.seq}; seq must be contiguous from 1")
            try:
                kb._check(e.kind, e.subtask_index, e.agent_id)
            except OrderingViolation as exc:
                raise InvariantViolation(f"entry {pos}: {exc}") from exc
            if e.token_estimate != estimate_tokens(e.content):
                raise InvariantViolation(f"entry {pos}: token_estimate does not match content")
            kb._entries.append(e)
        if not kb._entries:
            raise InvariantViolation("transcript is empty; it must start with the task description")
        return kb


def init_kb(task: Task, clock: Clock | None = None) -> KnowledgeBase:
    kb = KnowledgeBase(clock)
    kb.append(EntryKind.TASK_DESCRIPTION, task.description)
    return kb


def latest_response(kb: KnowledgeBase) -> str:
    return kb.latest_response()


def dumps_transcript(kb: KnowledgeBase) -> str:
    return "".join(json.dumps(e.to_record(), ensure_ascii=False) + "\n" for e in kb.entries)


def export_transcript(kb: KnowledgeBase, path: str | Path) -> None:
    Path(path).write_text(dumps_transcript(kb), encoding="utf-8")


def loads_transcript(text: str, path: str | None = None) -> KnowledgeBase:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entry = KnowledgeBaseEntry(
                seq=rec["seq"],
                kind=EntryKind(rec["kind"]),
                content=rec["content"],
                token_estimate=rec["token_estimate"],
                timestamp=rec["timestamp"],
                subtask_index=rec.get("subtask_index"),
                agent_id=rec.get("agent_id"),
            )
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {lineno}", path) from exc
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"bad transcript record: {exc}", f"line {lineno}", path) from exc
        entries.append(entry)
    return KnowledgeBase.from_entries(entries)


def load_transcript(path: str | Path) -> KnowledgeBase:
    return loads_transcript(Path(path).read_text(encoding="utf-8"), str(path))
