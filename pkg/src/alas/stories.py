"""User stories in the ``As a <role>, I want <requirement> so that <benefit>`` form."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import DataError, ParseError

__all__ = [
    "Narrative",
    "Provenance",
    "UserStory",
    "MalformedNarrative",
    "DuplicateId",
    "parse_narrative",
    "render_narrative",
    "normalize_narrative",
    "render_story",
    "story_to_record",
    "story_from_record",
    "dump_story",
    "loads_story",
    "load_story_corpus",
    "save_story_corpus",
    "dumps_story_corpus",
]

_WS = re.compile(r"\s+")
_ROLE_MARKER = re.compile(r"^\s*as\s+an?\s+", re.IGNORECASE)
_WANT_MARKER = re.compile(r"\bi\s+want\b", re.IGNORECASE)
_NARRATIVE = re.compile(
    r"""^\s*as\s+an?\s+(?P<role>.*?)\s*,?\s*
        \bi\s+want\b\s*(?P<requirement>.*?)
        (?:\s*,?\s*\bso\s+that\b(?P<benefit>.*?))?
        \s*[.!]?\s*$""",
    re.IGNORECASE | re.VERBOSE | re.DOTALL,
)


def _squash(text: str) -> str:
    return _WS.sub(" ", text).strip()


class MalformedNarrative(DataError):
    """The text does not follow the narrative template.

    ``marker`` names the piece that failed: ``"as a"``, ``"i want"``,
    ``"so that"`` (clause present but empty), ``"role"`` or ``"requirement"``.
    """

    def __init__(self, marker: str, text: str = ""):
        self.marker = marker
        self.text = text
        super().__init__(f'malformed narrative: missing "{marker}" in {text!r}')


class DuplicateId(DataError):
    def __init__(self, story_id: str, locator: str | None = None):
        self.story_id = story_id
        self.locator = locator
        suffix = f" ({locator})" if locator else ""
        super().__init__(f"duplicate story id {story_id!r}{suffix}")


@dataclass(frozen=True)
class Narrative:
    role: str
    requirement: str
    benefit: str | None = None

    def __post_init__(self) -> None:
        if not self.role or not self.role.strip():
            raise ValueError("narrative role must be non-empty")
        if not self.requirement or not self.requirement.strip():
            raise ValueError("narrative requirement must be non-empty")
        if self.benefit is not None and not self.benefit.strip():
            raise ValueError("narrative benefit must be absent or non-empty")


def parse_narrative(text: str) -> Narrative:
    """Split a single template sentence into role, requirement and benefit.

    Matching is case-insensitive and accepts "a" or "an". The first "i want"
    ends the role and the first "so that" ends the requirement. Whitespace
    inside each segment is collapsed; a trailing full stop is dropped.
    """
    if not _ROLE_MARKER.search(text):
        raise MalformedNarrative("as a", text)
    if not _WANT_MARKER.search(text):
        raise MalformedNarrative("i want", text)
    m = _NARRATIVE.match(text)
    if m is None:  # pragma: no cover - both markers present means the pattern matches
        raise MalformedNarrative("i want", text)
    role = _squash(m.group("role"))
    requirement = _squash(m.group("requirement"))
    benefit = m.group("benefit")
    if not role:
        raise MalformedNarrative("role", text)
    if not requirement:
        raise MalformedNarrative("requirement", text)
    if benefit is not None:
        benefit = _squash(benefit)
        if not benefit:
            raise MalformedNarrative("so that", text)
    return Narrative(role, requirement, benefit)


def render_narrative(n: Narrative) -> str:
    out = f"As a {n.role}, I want {n.requirement}"
    if n.benefit is not None:
        out += f" so that {n.benefit}"
    return out


def normalize_narrative(text: str) -> str:
    """Canonical spelling of a narrative sentence."""
    return render_narrative(parse_narrative(text))


@dataclass(frozen=True)
class Provenance:
    """Where a story version came from: ``original`` or ``improved``."""

    kind: str = "original"
    model_tag: str | None = None
    version_label: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("original", "improved"):
            raise ValueError(f"unknown provenance kind {self.kind!r}")
        if self.kind == "improved":
            if not self.model_tag or not self.model_tag.strip():
                raise ValueError("improved provenance needs a model_tag")
            if not self.version_label or not self.version_label.strip():
                raise ValueError("improved provenance needs a version_label")
        elif self.model_tag is not None or self.version_label is not None:
            raise ValueError("original provenance carries no model_tag/version_label")

    @classmethod
    def original(cls) -> "Provenance":
        return cls("original")

    @classmethod
    def improved(cls, model_tag: str, version_label: str) -> "Provenance":
        return cls("improved", model_tag, version_label)

    @property
    def is_improved(self) -> bool:
        return self.kind == "improved"

    def to_record(self) -> dict[str, Any]:
        if self.kind == "original":
            return {"kind": "original"}
        return {"kind": "improved", "model_tag": self.model_tag, "version_label": self.version_label}


@dataclass(frozen=True)
class UserStory:
    id: str
    title: str
    narrative: Narrative
    description: str = ""
    acceptance_criteria: tuple[str, ...] = ()
    provenance: Provenance = field(default_factory=Provenance.original)

    def __post_init__(self) -> None:
        if not self.id or not str(self.id).strip():
            raise ValueError("story id must be non-empty")
        object.__setattr__(self, "acceptance_criteria", tuple(self.acceptance_criteria))
        seen = set()
        for item in self.acceptance_criteria:
            if not item or not item.strip():
                raise ValueError(f"story {self.id}: empty acceptance criterion")
            if item in seen:
                raise ValueError(f"story {self.id}: duplicate acceptance criterion {item!r}")
            seen.add(item)

    @property
    def variant_id(self) -> str:
        """``US1`` for an original, ``US1(v.2)`` for an improved version."""
        if self.provenance.is_improved:
            return f"{self.id}({self.provenance.version_label})"
        return self.id


def render_story(story: UserStory) -> str:
    """Human-readable block used inside prompts."""
    lines = [f"{story.id}: {story.title}", render_narrative(story.narrative)]
    if story.description:
        lines += ["", story.description]
    if story.acceptance_criteria:
        lines += ["", "Acceptance criteria:"]
        lines += [f"{i}. {ac}" for i, ac in enumerate(story.acceptance_criteria, 1)]
    return "\n".join(lines)


# -- file format ---------------------------------------------------------------

_FIELDS = ("id", "title", "role", "requirement", "benefit", "description",
           "acceptance_criteria", "provenance")


def story_to_record(story: UserStory) -> dict[str, Any]:
    n = story.narrative
    return {
        "id": story.id,
        "title": story.title,
        "role": n.role,
        "requirement": n.requirement,
        "benefit": n.benefit,
        "description": story.description,
        "acceptance_criteria": list(story.acceptance_criteria),
        "provenance": story.provenance.to_record(),
    }


def _narrative_from_description(description: str) -> Narrative | None:
    for line in description.splitlines():
        if _ROLE_MARKER.search(line):
            try:
                return parse_narrative(line)
            except MalformedNarrative:
                continue
    return None


def story_from_record(rec: Any, locator: str | None = None) -> UserStory:
    """Build a story from one decoded record.

    When ``role``/``requirement`` are missing, the narrative is recovered from
    the first template sentence in ``description``.
    """
    if not isinstance(rec, dict):
        raise ParseError("story record must be an object", locator)
    unknown = set(rec) - set(_FIELDS)
    if unknown:
        raise ParseError(f"unknown fields {sorted(unknown)}", locator)
    for key in ("id", "title"):
        if not isinstance(rec.get(key), str):
            raise ParseError(f"field {key!r} must be a string", locator)
    description = rec.get("description", "")
    if not isinstance(description, str):
        raise ParseError("field 'description' must be a string", locator)
    acs = rec.get("acceptance_criteria", [])
    if not isinstance(acs, list) or not all(isinstance(a, str) for a in acs):
        raise ParseError("field 'acceptance_criteria' must be an array of strings", locator)

    try:
        if rec.get("role") or rec.get("requirement"):
            benefit = rec.get("benefit")
            narrative = Narrative(_squash(rec.get("role") or ""), _squash(rec.get("requirement") or ""),
                                  _squash(benefit) if benefit is not None else None)
        else:
            narrative = _narrative_from_description(description)
            if narrative is None:
                raise ParseError("no role/requirement fields and no narrative in description", locator)

        prov = rec.get("provenance", {"kind": "original"})
        if not isinstance(prov, dict):
            raise ParseError("field 'provenance' must be an object", locator)
        provenance = Provenance(prov.get("kind", "original"), prov.get("model_tag"), prov.get("version_label"))
        return UserStory(rec["id"], rec["title"], narrative, description, tuple(acs), provenance)
    except ValueError as exc:
        raise ParseError(str(exc), locator) from exc


def _decode(text: str, path: str | None) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}", path) from exc


def dump_story(story: UserStory) -> str:
    return json.dumps(story_to_record(story), indent=2, ensure_ascii=False) + "\n"


def loads_story(text: str) -> UserStory:
    return story_from_record(_decode(text, None))


def _check_unique(stories: Iterable[UserStory]) -> None:
    seen = set()
    for i, s in enumerate(stories):
        if s.variant_id in seen:
            raise DuplicateId(s.id, f"record {i}")
        seen.add(s.variant_id)


def parse_story_corpus(text: str, path: str | None = None) -> list[UserStory]:
    data = _decode(text, path)
    if not isinstance(data, list):
        raise ParseError("story corpus must be a JSON array", "line 1", path)
    stories = []
    for i, rec in enumerate(data):
        try:
            stories.append(story_from_record(rec, f"record {i}"))
        except ParseError as exc:
            exc.path = path
            raise
    _check_unique(stories)
    return stories


def load_story_corpus(path: str | Path) -> list[UserStory]:
    """Read a JSON array of story records, preserving file order."""
    path = Path(path)
    return parse_story_corpus(path.read_text(encoding="utf-8"), str(path))


def dumps_story_corpus(stories: Iterable[UserStory]) -> str:
    stories = list(stories)
    _check_unique(stories)
    return json.dumps([story_to_record(s) for s in stories], indent=2, ensure_ascii=False) + "\n"


def save_story_corpus(stories: Iterable[UserStory], path: str | Path) -> None:
    Path(path).write_text(dumps_story_corpus(stories), encoding="utf-8")
