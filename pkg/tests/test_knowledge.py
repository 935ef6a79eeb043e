import json

import pytest

from alas.errors import InvariantViolation, ParseError
from alas.knowledge import (
    EntryKind,
    NoResponseYet,
    OrderingViolation,
    dumps_transcript,
    export_transcript,
    init_kb,
    latest_response,
    load_transcript,
    loads_transcript,
)

ISSUED, RESP = EntryKind.SUBTASK_ISSUED, EntryKind.AGENT_RESPONSE


def test_init(demo, clock):
    task, _ = demo
    kb = init_kb(task, clock)
    (e,) = kb.entries
    assert e.seq == 1 and e.kind is EntryKind.TASK_DESCRIPTION and e.content == task.description
    assert e.timestamp == "2024-03-01T09:00:00+00:00"


def test_append_pairs(demo, clock):
    kb = init_kb(demo[0], clock)
    assert kb.append(ISSUED, "p1", 1, "po") == 2
    assert kb.append(RESP, "r1", 1, "po") == 3


def test_response_needs_issued(demo, clock):
    kb = init_kb(demo[0], clock)
    with pytest.raises(OrderingViolation):
        kb.append(RESP, "r", 1, "po")


def test_response_agent_mismatch(demo, clock):
    kb = init_kb(demo[0], clock)
    kb.append(ISSUED, "p", 2, "po")
    with pytest.raises(OrderingViolation):
        kb.append(RESP, "r", 2, "re")


def test_task_description_only_first(demo, clock):
    kb = init_kb(demo[0], clock)
    with pytest.raises(OrderingViolation):
        kb.append(EntryKind.TASK_DESCRIPTION, "again")


def test_latest_response(demo, clock):
    kb = init_kb(demo[0], clock)
    with pytest.raises(NoResponseYet):
        latest_response(kb)
    kb.append(ISSUED, "p", 1, "po")
    kb.append(RESP, "draft A", 1, "po")
    assert latest_response(kb) == "draft A"
    kb.append(ISSUED, "p", 2, "re")
    kb.append(RESP, "draft B", 2, "re")
    assert latest_response(kb) == "draft B"


def test_append_only_view(demo, clock):
    kb = init_kb(demo[0], clock)
    snapshot = kb.entries
    kb.append(ISSUED, "p", 1, "po")
    assert len(snapshot) == 1 and len(kb.entries) == 2


def _full_kb(task, clock, n=3):
    kb = init_kb(task, clock)
    for i in range(1, n + 1):
        agent = "po" if i % 2 else "re"
        kb.append(ISSUED, f"prompt {i}", i, agent)
        kb.append(RESP, f"response {i}", i, agent)
    return kb


def test_export_load_roundtrip(tmp_path, demo, clock):
    kb = _full_kb(demo[0], clock)
    p = tmp_path / "t.jsonl"
    export_transcript(kb, p)
    loaded = load_transcript(p)
    assert loaded == kb
    assert dumps_transcript(loaded) == p.read_text()
    first = json.loads(p.read_text().splitlines()[0])
    assert list(first) == ["seq", "kind", "subtask_index", "agent_id", "content", "token_estimate", "timestamp"]


def _records(kb):
    return [json.loads(line) for line in dumps_transcript(kb).splitlines()]


def _dump(records):
    return "".join(json.dumps(r) + "\n" for r in records)


def test_tampered_gap(demo, clock):
    recs = _records(_full_kb(demo[0], clock))
    del recs[2]
    with pytest.raises(InvariantViolation):
        loads_transcript(_dump(recs))


def test_tampered_seq_gap_only(demo, clock):
    recs = _records(_full_kb(demo[0], clock))
    recs[3]["seq"] = 9
    with pytest.raises(InvariantViolation, match="contiguous"):
        loads_transcript(_dump(recs))


def test_tampered_response_first(demo, clock):
    recs = _records(_full_kb(demo[0], clock))
    recs = [recs[2]] + recs[:2] + recs[3:]
    for i, r in enumerate(recs, 1):
        r["seq"] = i
    with pytest.raises(InvariantViolation):
        loads_transcript(_dump(recs))


def test_tampered_agent(demo, clock):
    recs = _records(_full_kb(demo[0], clock))
    recs[2]["agent_id"] = "re"
    with pytest.raises(InvariantViolation):
        loads_transcript(_dump(recs))


def test_tampered_content(demo, clock):
    recs = _records(_full_kb(demo[0], clock))
    recs[2]["content"] += " and more words"
    with pytest.raises(InvariantViolation, match="token_estimate"):
        loads_transcript(_dump(recs))


def test_garbage_line():
    with pytest.raises(ParseError) as ei:
        loads_transcript('{"seq": 1\n')
    assert ei.value.locator == "line 1"
