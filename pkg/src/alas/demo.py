"""Synthetic fixtures: scripted agent replies, a story corpus, and survey ratings."""

from __future__ import annotations

import json
import random
from fractions import Fraction

from .evaluation import STATEMENT_IDS, RatingRecord, dumps_ratings
from .profiles import builtin_roster, dumps_roster
from .stories import Narrative, UserStory, dump_story, dumps_story_corpus
from .tasks import STORY_FENCE, builtin_demo_task, demo_plan, demo_stories, dumps_plan, dumps_task

IMPROVED_US1 = UserStory(
    id="US1",
    title="Pair handheld with mobile label printer",
    narrative=Narrative(
        "delivery person",
        "to pair my handheld device with the mobile label printer at the start of my shift",
        "I can print delivery notices at the doorstep without delay",
    ),
    description="The handheld connects to the Bluetooth label printer assigned to the vehicle. "
                "Pairing is needed once per shift and is restored automatically after a disconnect.",
    acceptance_criteria=(
        "Given the printer is switched on and in range, when I select it in the app, "
        "then the app shows it as connected within 10 seconds.",
        "Given the printer is connected, when I print a test label, then the label shows the "
        "current date and my staff number.",
        "Given the connection drops, when the printer is back in range, then the app reconnects "
        "without user action within 30 seconds.",
        "Given more than one printer is in range, when I open the printer list, then the printer "
        "assigned to my vehicle is listed first.",
    ),
)


def _fenced(story: UserStory) -> str:
    begin, end = STORY_FENCE
    return f"{begin}\n{dump_story(story)}{end}"


def demo_script() -> list[str]:
    """Six replies matching the demo plan; the last carries the fenced improved story."""
    return [
        "Here is US1 'Connect mobile printer'. It supports MVP feature 5 (printing delivery notices) "
        "and the vision's goal of shorter tours.",
        "Analysis: the requirement does not say when pairing happens; 'can be selected' is not "
        "measurable; reconnection and multiple printers in range are not covered.",
        "From the business side, automatic reconnection matters most because a failed print stops "
        "the delivery. The multiple-printer case is frequent at the depot.",
        "Draft: As a delivery person, I want to pair my handheld device with the mobile label printer "
        "at the start of my shift so that I can print delivery notices at the doorstep without delay. "
        "Acceptance criteria cover connection time, test label, reconnection and printer ordering.",
        "The draft is in scope and keeps the story small. Please keep the four criteria and make the "
        "time limits explicit.",
        "Final version below.\n" + _fenced(IMPROVED_US1) + "\n",
    ]


def planner_script() -> list[str]:
    """A planner reply: the demo plan plus a key-facts section."""
    return [
        "Plan:\n" + dumps_plan(demo_plan()) +
        "\nKey facts:\n- Two agents take part: po and re.\n- The output is one improved user story.\n"
    ]


_ROLES = ["delivery person", "depot manager", "dispatcher", "recipient", "customer service agent",
          "route planner", "team lead", "driver"]
_ACTIONS = ["scan every parcel when loading the vehicle", "see the parcels of my tour in delivery order",
            "record a safe-place drop with a photo", "print a delivery notice for absent recipients",
            "reassign a parcel to another tour", "see the delivery status of a parcel",
            "capture the recipient's signature", "report a damaged parcel", "download the route before "
            "leaving the depot", "mark a parcel as refused"]
_BENEFITS = ["I save time on my tour", "nothing is left behind", "recipients can find their parcels",
             "customer questions are answered quickly", "the proof of delivery is complete", None]


def synthetic_corpus(n: int = 25, seed: int = 7) -> list[UserStory]:
    rng = random.Random(seed)
    stories = []
    for i in range(1, n + 1):
        action = rng.choice(_ACTIONS)
        narrative = Narrative(rng.choice(_ROLES), f"to {action}", rng.choice(_BENEFITS))
        acs = tuple(sorted(rng.sample([
            "The action is available offline.",
            "The result is visible in the back-office within 5 minutes.",
            "An error message explains what to do when the action fails.",
            "The action needs at most three taps.",
            "The event is stored with time and staff number.",
        ], k=2)))
        stories.append(UserStory(f"MD-{i:03d}", action.capitalize(), narrative, "", acs))
    return stories


def ratings_from_sums(variant_id: str, n: int, statement_sums: dict[str, int] | None,
                      overall_sum: Fraction | int, respondent_prefix: str = "R") -> list[RatingRecord]:
    """Deterministic ratings of ``n`` respondents whose per-column sums are given.

    Each column is spread as evenly as possible (scores differ by at most one
    step), so any sum between n and 5n is reachable.
    """
    def spread(total: Fraction, step: Fraction) -> list[Fraction]:
        units = total / step
        if units.denominator != 1:
            raise ValueError(f"{total} is not a multiple of {step}")
        base, extra = divmod(int(units), n)
        vals = [(base + (1 if i < extra else 0)) * step for i in range(n)]
        if not all(1 <= v <= 5 for v in vals):
            raise ValueError(f"sum {total} unreachable with {n} ratings in 1..5")
        return vals

    overall_sum = Fraction(overall_sum)
    step = Fraction(1) if overall_sum.denominator == 1 else Fraction(1, 2)
    overall = spread(overall_sum, step)
    cols = {s: spread(Fraction(statement_sums[s]), Fraction(1)) for s in STATEMENT_IDS} if statement_sums else {}
    return [
        RatingRecord(f"{respondent_prefix}{i + 1:02d}", variant_id,
                     {s: int(cols[s][i]) for s in cols}, overall[i])
        for i in range(n)
    ]


# Column sums over 12 respondents for the demo US1 ratings.
US1_SUMS = {
    "US1": (None, 40),
    "US1(v.1)": ({"S1": 50, "S2": 51, "S3": 48, "S4": 46, "S5": 48, "S6": 46, "S7": 47}, 48),
    "US1(v.2)": ({"S1": 47, "S2": 36, "S3": 43, "S4": 49, "S5": 46, "S6": 47, "S7": 47}, 48),
}


def demo_ratings() -> list[RatingRecord]:
    out = []
    for variant, (sums, overall) in US1_SUMS.items():
        out += ratings_from_sums(variant, 12, sums, overall)
    return out


def dumps_script(replies: list[str]) -> str:
    return json.dumps(replies, indent=2, ensure_ascii=False) + "\n"


def demo_files() -> dict[str, str]:
    """File name -> content for ``alas init``."""
    task, plan = builtin_demo_task()
    return {
        "task.json": dumps_task(task),
        "roster.json": dumps_roster(builtin_roster()),
        "plan.txt": dumps_plan(plan),
        "stories.json": dumps_story_corpus(demo_stories()),
        "script.json": dumps_script(demo_script()),
        "planner_script.json": dumps_script(planner_script()),
        "ratings.csv": dumps_ratings(demo_ratings()),
    }

