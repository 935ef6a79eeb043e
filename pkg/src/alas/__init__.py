"""Role-playing LLM agents that improve agile user stories, and a survey toolkit to evaluate them."""

from .backends import (
    CompletionRequest,
    CompletionResult,
    HttpBackend,
    ModelSpec,
    ScriptedBackend,
    builtin_model_specs,
)
from .evaluation import (
    RatingRecord,
    VariantReport,
    compute_report,
    export_survey,
    ingest_ratings,
    render_table,
    statement_catalog,
)
from .knowledge import KnowledgeBase, export_transcript, init_kb, load_transcript
from .orchestrator import RunConfig, RunResult, dry_run, extract_improved_story, run_task
from .profiles import AgentProfile, Roster, builtin_roster, load_roster, render_profile, validate_roster
from .prompts import Prompt, TokenBudget, check_budget, compose_followup, compose_initial, elide_to_fit
from .stories import Narrative, UserStory, load_story_corpus, parse_narrative, render_narrative
from .tasks import Plan, Subtask, Task, builtin_demo_task, generate_plan, validate_plan

__version__ = "0.1.0"

__all__ = [
    "CompletionRequest",
    "CompletionResult",
    "HttpBackend",
    "ModelSpec",
    "ScriptedBackend",
    "builtin_model_specs",
    "RatingRecord",
    "VariantReport",
    "compute_report",
    "export_survey",
    "ingest_ratings",
    "render_table",
    "statement_catalog",
    "KnowledgeBase",
    "export_transcript",
    "init_kb",
    "load_transcript",
    "RunConfig",
    "RunResult",
    "dry_run",
    "extract_improved_story",
    "run_task",
    "AgentProfile",
    "Roster",
    "builtin_roster",
    "load_roster",
    "render_profile",
    "validate_roster",
    "Prompt",
    "TokenBudget",
    "check_budget",
    "compose_followup",
    "compose_initial",
    "elide_to_fit",
    "Narrative",
    "UserStory",
    "load_story_corpus",
    "parse_narrative",
    "render_narrative",
    "Plan",
    "Subtask",
    "Task",
    "builtin_demo_task",
    "generate_plan",
    "validate_plan",
]
