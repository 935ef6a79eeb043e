"""Survey protocol: statement catalog, Likert ratings, per-variant reports, survey export."""

from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, ParseError
from .stories import UserStory, render_narrative

STATEMENTS: "OrderedDict[str, str]" = OrderedDict([
    ("S1", "The user story is simple and easy to understand."),
    ("S2", "The user story is of the right size (not too long)."),
    ("S3", "The user story is at a suitable level of detail."),
    ("S4", "The user story includes a description of the task and the goal to achieve."),
    ("S5", "The user story is technically achievable."),
    ("S6", "The acceptance criteria include measurable elements for test case preparation."),
    ("S7", "The acceptance criteria are sufficient to validate the story."),
])
STATEMENT_IDS = tuple(STATEMENTS)
LIKERT = (1, 2, 3, 4, 5)
LIKERT_LABELS = {1: "Strongly disagree", 2: "Disagree", 3: "Neutral", 4: "Agree", 5: "Strongly agree"}


@dataclass(frozen=True)
class Statement:
    id: str
    text: str


def statement_catalog() -> list[Statement]:
    return [Statement(k, v) for k, v in STATEMENTS.items()]


class OutOfRangeScore(DataError):
    pass


class MissingStatement(DataError):
    pass


class EmptyInput(DataError):
    pass


class MixedVariants(DataError):
    pass


@dataclass(frozen=True)
class RatingRecord:
    """One respondent's ratings of one story variant.

    ``scores`` is empty for overall-only records, which is how the original
    (unimproved) stories are rated. ``overall`` is a Fraction so half-step
    ratings can be admitted when the ingest option allows them.
    """

    respondent_id: str
    variant_id: str
    scores: dict[str, int]
    overall: Fraction
    open_answers: dict[str, str] = field(default_factory=dict)

    @property
    def overall_only(self) -> bool:
        return not self.scores


def round_half_up(value: Fraction | int | str | Decimal, places: int = 2) -> Decimal:
    """Round exactly, with ties going up: 3.125 -> 3.13."""
    q = Fraction(value) if not isinstance(value, Decimal) else Fraction(value)
    scale = 10 ** places
    n = math.floor(q * scale + Fraction(1, 2))
    return Decimal(n).scaleb(-places).quantize(Decimal(1).scaleb(-places))


@dataclass(frozen=True)
class VariantReport:
    variant_id: str
    n_respondents: int
    per_statement_mean: dict[str, Decimal] | None
    overall_mean: Decimal
    distribution: dict[str, dict[int, int]]
    exact_means: dict[str, Fraction]
    exact_overall: Fraction


def compute_report(records: Sequence[RatingRecord]) -> VariantReport:
    if not records:
        raise EmptyInput("no rating records")
    variants = {r.variant_id for r in records}
    if len(variants) > 1:
        raise MixedVariants(f"records span several variants: {sorted(variants)}")
    kinds = {r.overall_only for r in records}
    if len(kinds) > 1:
        raise MissingStatement(f"variant {records[0].variant_id}: some records lack statement scores")

    n = len(records)
    overall = sum((r.overall for r in records), Fraction(0)) / n
    if records[0].overall_only:
        return VariantReport(records[0].variant_id, n, None, round_half_up(overall), {}, {}, overall)

    exact = {}
    dist = {}
    for sid in STATEMENT_IDS:
        values = [r.scores[sid] for r in records]
        exact[sid] = Fraction(sum(values), n)
        dist[sid] = {v: values.count(v) for v in LIKERT}
    return VariantReport(
        records[0].variant_id, n, {k: round_half_up(v) for k, v in exact.items()},
        round_half_up(overall), dist, exact, overall,
    )


def mean_from_distribution(counts: dict[int, int]) -> Fraction:
    total = sum(counts.values())
    return Fraction(sum(v * c for v, c in counts.items()), total)


def compute_reports(records: Iterable[RatingRecord]) -> list[VariantReport]:
    """One report per variant, in order of first appearance."""
    groups: dict[str, list[RatingRecord]] = {}
    for r in records:
        groups.setdefault(r.variant_id, []).append(r)
    return [compute_report(g) for g in groups.values()]


# -- ratings file --------------------------------------------------------------
# CSV with header: respondent_id,variant_id,S1..S7,overall[,<open question columns>...]
# Blank S1..S7 on a row marks an overall-only rating (original stories).

RATING_COLUMNS = ("respondent_id", "variant_id", *STATEMENT_IDS, "overall")


def _score(raw: str, where: str, column: str, half_steps: bool = False) -> Fraction:
    try:
        value = Fraction(raw.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"{column}: {raw!r} is not a number", where) from exc
    step = Fraction(1, 2) if half_steps else 1
    if value % step != 0:
        raise OutOfRangeScore(f"{where}: {column}={raw!r} is not a whole{' or half' if half_steps else ''} step")
    if not 1 <= value <= 5:
        raise OutOfRangeScore(f"{where}: {column}={raw!r} outside 1..5")
    return value


def parse_ratings(text: str, allow_half_step_overall: bool = False, path: str | None = None) -> list[RatingRecord]:
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    for col in ("respondent_id", "variant_id", "overall"):
        if col not in header:
            raise ParseError(f"missing column {col!r}", "line 1", path)
    missing_cols = [s for s in STATEMENT_IDS if s not in header]
    if missing_cols:
        raise MissingStatement(f"{path or 'ratings'}: missing statement columns {missing_cols}")
    open_cols = [c for c in header if c not in RATING_COLUMNS]

    records = []
    for row in reader:
        where = f"line {reader.line_num}"
        if None in row:
            raise ParseError("too many fields", where, path)
        if any(v is None for v in row.values()):
            raise ParseError("too few fields", where, path)
        if not row["respondent_id"].strip() or not row["variant_id"].strip():
            raise ParseError("respondent_id and variant_id must be non-empty", where, path)
        raw_scores = {s: row[s].strip() for s in STATEMENT_IDS}
        filled = [s for s, v in raw_scores.items() if v]
        if filled and len(filled) != len(STATEMENT_IDS):
            absent = [s for s in STATEMENT_IDS if s not in filled]
            raise MissingStatement(f"{where}: no score for {absent}")
        scores = {s: int(_score(v, where, s)) for s, v in raw_scores.items()} if filled else {}
        if not row["overall"].strip():
            raise ParseError("overall rating is required", where, path)
        overall = _score(row["overall"], where, "overall", allow_half_step_overall)
        answers = {c: row[c] for c in open_cols if row[c]}
        records.append(RatingRecord(row["respondent_id"].strip(), row["variant_id"].strip(), scores, overall, answers))
    return records


def ingest_ratings(path: str | Path, allow_half_step_overall: bool = False) -> list[RatingRecord]:
    path = Path(path)
    return parse_ratings(path.read_text(encoding="utf-8"), allow_half_step_overall, str(path))


def _fmt_fraction(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else str(Decimal(v.numerator) / Decimal(v.denominator))


def dumps_ratings(records: Sequence[RatingRecord], open_columns: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*RATING_COLUMNS, *open_columns])
    for r in records:
        w.writerow([
            r.respondent_id, r.variant_id,
            *(r.scores.get(s, "") for s in STATEMENT_IDS),
            _fmt_fraction(r.overall),
            *(r.open_answers.get(c, "") for c in open_columns),
        ])
    return buf.getvalue()


# -- table rendering -------------------------------------------------------------

def render_table(reports: Sequence[VariantReport]) -> str:
    """Fixed-width table of means; overall-only variants show '-' per statement."""
    first = max([len("User story")] + [len(r.variant_id) for r in reports])
    cols = [*STATEMENT_IDS, "Overall"]
    widths = [max(len(c), 4) for c in cols]

    def row(cells: Sequence[str]) -> str:
        return (cells[0].ljust(first) + "  " + "  ".join(c.rjust(w) for c, w in zip(cells[1:], widths))).rstrip()

    lines = [row(["User story", *cols]), "-" * (first + sum(w + 2 for w in widths))]
    for r in reports:
        if r.per_statement_mean is None:
            stats = ["-"] * len(STATEMENT_IDS)
        else:
            stats = [str(r.per_statement_mean[s]) for s in STATEMENT_IDS]
        lines.append(row([r.variant_id, *stats, str(r.overall_mean)]))
    return "\n".join(lines) + "\n"


def render_distribution(report: VariantReport) -> str:
    """Counts per Likert level for each statement."""
    if not report.distribution:
        return f"{report.variant_id}: overall-only ratings (n={report.n_respondents})\n"
    head = f"{report.variant_id} (n={report.n_respondents})"
    lines = [head, "      " + " ".join(f"{v:>3}" for v in LIKERT)]
    for sid in STATEMENT_IDS:
        lines.append(f"  {sid}  " + " ".join(f"{report.distribution[sid][v]:>3}" for v in LIKERT))
    return "\n".join(lines) + "\n"


# -- survey export -----------------------------------------------------------------

@dataclass(frozen=True)
class SurveyLayout:
    """Which questions the survey asks. Defaults give 34 rating / 12 open
    questions for two originals with two improved versions each."""

    improved_open: tuple[str, ...] = (
        "Which improvements do you notice compared with the original user story?",
        "Do you have concerns about this version, or suggestions to improve it further?",
    )
    original_open: tuple[str, ...] = (
        "What concerns do you have about the original user story?",
    )
    overall_per_improved: bool = True
    overall_per_original: bool = True
    best_variant_question: bool = True


@dataclass(frozen=True)
class Question:
    qid: str
    kind: str  # "rating" or "open"
    story: str
    text: str


@dataclass
class SurveyDocument:
    preamble: str
    sections: list[tuple[str, list[Question]]]

    @property
    def questions(self) -> list[Question]:
        return [q for _, qs in self.sections for q in qs]

    @property
    def rating_count(self) -> int:
        return sum(q.kind == "rating" for q in self.questions)

    @property
    def open_count(self) -> int:
        return sum(q.kind == "open" for q in self.questions)

    def render(self) -> str:
        out = [self.preamble.rstrip(), ""]
        for title, qs in self.sections:
            out += [f"## {title}", ""]
            for q in qs:
                tag = "[rating 1-5]" if q.kind == "rating" else "[open]"
                out.append(f"- {tag} {q.qid}. {q.text}")
            out.append("")
        return "\n".join(out).rstrip() + "\n"


SURVEY_PREAMBLE = """\
# User story quality survey

Rate each statement from 1 to 5, where 1 means strong disagreement and 5 means
strong agreement. Answer the open questions in your own words."""


def _story_block(s: UserStory) -> str:
    return f"{s.variant_id} {s.title}: {render_narrative(s.narrative)}"


def export_survey(variants: Sequence[UserStory], out: str | Path | None = None,
                  layout: SurveyLayout | None = None) -> SurveyDocument:
    """Build the questionnaire for a set of original and improved stories.

    Improved stories are grouped under the original with the same ``id``.
    """
    layout = layout or SurveyLayout()
    originals = [s for s in variants if not s.provenance.is_improved]
    improved: dict[str, list[UserStory]] = {}
    for s in variants:
        if s.provenance.is_improved:
            improved.setdefault(s.id, []).append(s)
    order = [s.id for s in originals] + [i for i in improved if i not in {o.id for o in originals}]
    by_id = {s.id: s for s in originals}

    sections = []
    counter = 0

    def q(kind: str, story: str, text: str) -> Question:
        nonlocal counter
        counter += 1
        return Question(f"Q{counter}", kind, story, text)

    for sid in order:
        if sid in by_id:
            o = by_id[sid]
            qs = []
            if layout.overall_per_original:
                qs.append(q("rating", o.variant_id, f"Overall, how satisfied are you with {o.variant_id}?"))
            qs += [q("open", o.variant_id, t) for t in layout.original_open]
            sections.append((_story_block(o), qs))
        for v in improved.get(sid, []):
            qs = [q("rating", v.variant_id, f"{st.id}: {st.text}") for st in statement_catalog()]
            if layout.overall_per_improved:
                qs.append(q("rating", v.variant_id, f"Overall, how satisfied are you with {v.variant_id}?"))
            qs += [q("open", v.variant_id, t) for t in layout.improved_open]
            sections.append((_story_block(v), qs))
        if layout.best_variant_question and improved.get(sid):
            names = ", ".join(v.variant_id for v in improved[sid])
            sections.append((f"Best version of {sid}", [
                q("open", sid, f"Which version ({names}) is most appropriate for the project context, and why?")
            ]))

    doc = SurveyDocument(SURVEY_PREAMBLE, sections)
    if out is not None:
        Path(out).write_text(doc.render(), encoding="utf-8")
    return doc
