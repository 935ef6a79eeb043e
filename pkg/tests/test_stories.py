import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alas.demo import synthetic_corpus
from alas.errors import ParseError
from alas.stories import (
    DuplicateId,
    MalformedNarrative,
    Narrative,
    Provenance,
    UserStory,
    dumps_story_corpus,
    load_story_corpus,
    loads_story,
    normalize_narrative,
    parse_narrative,
    render_narrative,
    story_to_record,
)

FIG2 = ("As a delivery person, I want to synchronize my mobile device with the mobile printer "
        "so that I can print labels")


def test_parse_printer_story():
    n = parse_narrative(FIG2)
    assert n == Narrative("delivery person", "to synchronize my mobile device with the mobile printer",
                          "I can print labels")


def test_parse_without_benefit():
    assert parse_narrative("As a user, I want login") == Narrative("user", "login", None)


def test_missing_as_a():
    with pytest.raises(MalformedNarrative) as ei:
        parse_narrative("I want a pony")
    assert ei.value.marker == "as a"


def test_missing_i_want():
    with pytest.raises(MalformedNarrative) as ei:
        parse_narrative("As a user, I need login")
    assert ei.value.marker == "i want"


@pytest.mark.parametrize("text, marker", [
    ("As a , I want login", "role"),
    ("As a user, I want", "requirement"),
    ("As a user, I want login so that", "so that"),
])
def test_empty_segments_name_the_part(text, marker):
    with pytest.raises(MalformedNarrative) as ei:
        parse_narrative(text)
    assert ei.value.marker == marker


@pytest.mark.parametrize("text", [
    "as an Admin, i want   reports so that I can plan.",
    "AS AN Admin I WANT reports SO THAT I can plan",
    "  As an Admin,\tI want reports, so that I can plan. ",
])
def test_case_and_spacing_tolerated(text):
    assert parse_narrative(text) == Narrative("Admin", "reports", "I can plan")


def test_first_so_that_wins():
    n = parse_narrative("As a user, I want A so that B so that C")
    assert (n.requirement, n.benefit) == ("A", "B so that C")


def test_render():
    assert render_narrative(Narrative("user", "login")) == "As a user, I want login"
    assert render_narrative(Narrative("PO", "X", "Y")) == "As a PO, I want X so that Y"


def test_normalize():
    assert normalize_narrative("as an  admin, i want x.") == "As a admin, I want x"


_word = st.text(alphabet="bcdefghjklmnpqrstuvwxyz", min_size=1, max_size=8)
_phrase = st.lists(_word, min_size=1, max_size=6).map(" ".join).filter(
    lambda s: not any(m in f" {s} " for m in (" so that ", " i want ", " as a ", " as an ")))


@settings(max_examples=300, deadline=None)
@given(_phrase, _phrase, st.none() | _phrase)
def test_roundtrip_property(role, req, benefit):
    n = Narrative(role, req, benefit)
    text = render_narrative(n)
    assert parse_narrative(text) == n
    assert render_narrative(parse_narrative(text)) == text


def test_narrative_invariants():
    with pytest.raises(ValueError):
        Narrative("  ", "x")
    with pytest.raises(ValueError):
        Narrative("a", "")


def test_story_invariants():
    n = Narrative("user", "login")
    with pytest.raises(ValueError):
        UserStory("S", "t", n, acceptance_criteria=("a", "a"))
    with pytest.raises(ValueError):
        UserStory("S", "t", n, acceptance_criteria=("a", " "))
    with pytest.raises(ValueError):
        Provenance("improved", "", "v.1")
    assert UserStory("S", "t", n, provenance=Provenance.improved("gpt-4", "v.2")).variant_id == "S(v.2)"


def _write(tmp_path, records):
    p = tmp_path / "stories.json"
    p.write_text(json.dumps(records))
    return p


def _rec(sid, **kw):
    rec = {"id": sid, "title": "T", "role": "user", "requirement": "login", "benefit": None,
           "description": "", "acceptance_criteria": ["works"], "provenance": {"kind": "original"}}
    rec.update(kw)
    return rec


def test_load_two_stories_in_order(tmp_path):
    stories = load_story_corpus(_write(tmp_path, [_rec("B"), _rec("A")]))
    assert [s.id for s in stories] == ["B", "A"]


def test_duplicate_id(tmp_path):
    with pytest.raises(DuplicateId) as ei:
        load_story_corpus(_write(tmp_path, [_rec("A"), _rec("A")]))
    assert ei.value.locator == "record 1"


def test_improved_version_shares_id(tmp_path):
    improved = _rec("A", provenance={"kind": "improved", "model_tag": "m", "version_label": "v.1"})
    stories = load_story_corpus(_write(tmp_path, [_rec("A"), improved]))
    assert [s.variant_id for s in stories] == ["A", "A(v.1)"]


def test_parse_error_locators(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('[\n{"id": "A",\n')
    with pytest.raises(ParseError) as ei:
        load_story_corpus(p)
    assert ei.value.locator.startswith("line ")
    with pytest.raises(ParseError) as ei:
        load_story_corpus(_write(tmp_path, [_rec("A"), _rec("B", acceptance_criteria="x")]))
    assert ei.value.locator == "record 1"


def test_narrative_from_description_when_fields_missing(tmp_path):
    rec = _rec("A", description="Context line.\nAs a driver, I want a map so that I find streets.")
    del rec["role"], rec["requirement"], rec["benefit"]
    (s,) = load_story_corpus(_write(tmp_path, [rec]))
    assert s.narrative == Narrative("driver", "a map", "I find streets")


def test_record_field_order():
    s = loads_story(json.dumps(_rec("A")))
    assert list(story_to_record(s)) == ["id", "title", "role", "requirement", "benefit", "description",
                                       "acceptance_criteria", "provenance"]


def test_synthetic_corpus_roundtrips(tmp_path):
    corpus = synthetic_corpus(25)
    p = tmp_path / "c.json"
    p.write_text(dumps_story_corpus(corpus))
    loaded = load_story_corpus(p)
    assert loaded == corpus and len(loaded) == 25
    assert dumps_story_corpus(loaded) == p.read_text()
    for s in loaded:
        text = render_narrative(s.narrative)
        assert render_narrative(parse_narrative(text)) == text
