"""Agent personas and rosters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterator

from .errors import ParseError

DEFAULT_BACKEND = "default"


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    role_name: str
    role_definition: str
    human_level: int
    agent_level: int
    responsibilities: tuple[str, ...]
    practical_tips: tuple[str, ...] = ()
    tone_spec: str = ""
    backend_id: str = DEFAULT_BACKEND

    def __post_init__(self) -> None:
        object.__setattr__(self, "responsibilities", tuple(self.responsibilities))
        object.__setattr__(self, "practical_tips", tuple(self.practical_tips))

    def violations(self) -> list[str]:
        """Invariant breaches for this profile alone (empty when valid)."""
        out = []
        for name in ("agent_id", "role_name", "role_definition", "tone_spec", "backend_id"):
            if not getattr(self, name).strip():
                out.append(f"{self.agent_id or '?'}: {name} must be non-empty")
        if self.human_level < 1 or self.agent_level < 1:
            out.append(f"{self.agent_id}: knowledge levels must be positive integers")
        if self.agent_level <= self.human_level:
            out.append(
                f"{self.agent_id}: knowledge amplification requires agent_level > human_level "
                f"(got {self.agent_level} <= {self.human_level})"
            )
        if not self.responsibilities:
            out.append(f"{self.agent_id}: responsibilities must be non-empty")
        if any(not r.strip() for r in self.responsibilities):
            out.append(f"{self.agent_id}: empty responsibility item")
        return out


@dataclass(frozen=True)
class Roster:
    agents: tuple[AgentProfile, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))

    @property
    def k(self) -> int:
        return len(self.agents)

    @property
    def ids(self) -> list[str]:
        return [a.agent_id for a in self.agents]

    def get(self, agent_id: str) -> AgentProfile:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)

    def __contains__(self, agent_id: object) -> bool:
        return any(a.agent_id == agent_id for a in self.agents)

    def __iter__(self) -> Iterator[AgentProfile]:
        return iter(self.agents)

    def __len__(self) -> int:
        return len(self.agents)


def _article(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


def render_profile(p: AgentProfile) -> str:
    """Persona text delivered as the system message.

    Sections, in order: role adoption, knowledge amplification,
    responsibilities, practical tips, tone.
    """
    parts = [
        f"From now on, you will play the role of {_article(p.role_name)} {p.role_name}, {p.role_definition}",
        (
            f"If a human {p.role_name} has a level {p.human_level} knowledge, you will have a level "
            f"{p.agent_level} of knowledge in this role. Please make sure to make accurate and "
            "comprehensive results in this role, because if you don't, the software may not meet "
            "the desired outcomes, and the project could fail."
        ),
        "Key responsibilities:\n" + "\n".join(f"- {r}" for r in p.responsibilities),
        "Practical tips:\n" + ("\n".join(f"- {t}" for t in p.practical_tips) or "- (none)"),
        f"Tone:\n{p.tone_spec}",
    ]
    return "\n\n".join(parts)


def builtin_roster() -> Roster:
    """The product owner / requirements engineer pair."""
    po = AgentProfile(
        agent_id="po",
        role_name="Product Owner",
        role_definition=(
            "a new version of AI model that understands the vision of the product and represents "
            "the interests of its users and the business."
        ),
        human_level=10,
        agent_level=250,
        responsibilities=(
            "You are responsible for managing product backlog and prioritizing user stories "
            "based on business value and customer needs.",
            "Ensure that the user stories align with the overall product strategy and objectives.",
            "Review proposed changes to user stories and confirm they still deliver the intended business value.",
        ),
        practical_tips=(
            "Refer to the MVP document and the product vision when judging the value of a story.",
            "Keep the scope of each story focused on one user goal.",
        ),
        tone_spec=(
            "The tone of the responses should be professional, yet approachable and friendly. "
            "As a Product Owner, you should provide clear and concise instructions, while also "
            "fostering a positive and collaborative environment."
        ),
    )
    re_ = AgentProfile(
        agent_id="re",
        role_name="Requirements Engineer",
        role_definition=(
            "a new version of AI model that is capable of analyzing, documenting, and managing "
            "software requirements."
        ),
        human_level=10,
        agent_level=250,
        responsibilities=(
            "Your main task is to elicit, analyze, document, and manage the requirements for a software project.",
            "Ensure that the user story description is unambiguous and the acceptance criteria are measurable.",
            "Check each user story against the INVEST characteristics and the organizational standards "
            "for requirements engineering.",
        ),
        practical_tips=(
            "Use clear and unambiguous language when documenting requirements to avoid any misunderstandings.",
            "Write every acceptance criterion so that a test case can be derived from it.",
        ),
        tone_spec="The tone of the responses should be precise, objective and concise.",
    )
    return Roster((po, re_))


def validate_roster(r: Roster) -> list[str]:
    """All invariant violations of a roster; never raises."""
    out = []
    if r.k < 1:
        out.append("roster must contain at least one agent")
    seen = set()
    for a in r.agents:
        if a.agent_id in seen:
            out.append(f"duplicate agent_id {a.agent_id!r}")
        seen.add(a.agent_id)
        out.extend(a.violations())
    return out


# -- file format ---------------------------------------------------------------

_FIELD_NAMES = [f.name for f in fields(AgentProfile)]
_REQUIRED = ("agent_id", "role_name", "role_definition", "human_level", "agent_level", "responsibilities")


def profile_to_record(p: AgentProfile) -> dict[str, Any]:
    rec = {name: getattr(p, name) for name in _FIELD_NAMES}
    rec["responsibilities"] = list(p.responsibilities)
    rec["practical_tips"] = list(p.practical_tips)
    return rec


def profile_from_record(rec: Any, locator: str | None = None) -> AgentProfile:
    if not isinstance(rec, dict):
        raise ParseError("profile must be an object", locator)
    missing = [k for k in _REQUIRED if k not in rec]
    if missing:
        raise ParseError(f"missing fields {missing}", locator)
    unknown = set(rec) - set(_FIELD_NAMES)
    if unknown:
        raise ParseError(f"unknown fields {sorted(unknown)}", locator)
    for k in ("human_level", "agent_level"):
        if not isinstance(rec[k], int) or isinstance(rec[k], bool):
            raise ParseError(f"field {k!r} must be an integer", locator)
    for k in ("responsibilities", "practical_tips"):
        v = rec.get(k, [])
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            raise ParseError(f"field {k!r} must be an array of strings", locator)
    for k in ("agent_id", "role_name", "role_definition", "tone_spec", "backend_id"):
        if k in rec and not isinstance(rec[k], str):
            raise ParseError(f"field {k!r} must be a string", locator)
    return AgentProfile(**rec)


def dumps_roster(r: Roster) -> str:
    return json.dumps([profile_to_record(a) for a in r.agents], indent=2, ensure_ascii=False) + "\n"


def save_roster(r: Roster, path: str | Path) -> None:
    Path(path).write_text(dumps_roster(r), encoding="utf-8")


def load_roster(path: str | Path) -> Roster:
    """Parse a roster file. Structure errors raise; invariants are left to
    :func:`validate_roster`."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}", str(path)) from exc
    if not isinstance(data, list):
        raise ParseError("roster must be a JSON array of profiles", "line 1", str(path))
    agents = []
    for i, rec in enumerate(data):
        try:
            agents.append(profile_from_record(rec, f"record {i}"))
        except ParseError as exc:
            exc.path = str(path)
            raise
    return Roster(tuple(agents))
