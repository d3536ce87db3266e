"""Thought-box parsing: the visible body must never leak the marker, and a
well-formed box must round-trip exactly."""
from __future__ import annotations

import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commgame.thoughtbox import (
    ThoughtBoxFormat,
    UnterminatedThoughtBox,
    parse_thought_box,
)

FMT = ThoughtBoxFormat()

# text that cannot collide with the default marker or terminator
safe_text = st.text(
    alphabet=st.characters(blacklist_characters="[]", blacklist_categories=("Cs",)),
    max_size=200,
)

# arbitrary noise, marker fragments and brackets included
noisy_text = st.text(max_size=80)


def parse_quietly(raw: str, fmt: ThoughtBoxFormat = FMT):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnterminatedThoughtBox)
        return parse_thought_box(raw, fmt)


@given(
    st.lists(
        st.one_of(noisy_text, st.just(FMT.marker), st.just(FMT.terminator)),
        max_size=12,
    )
)
@settings(max_examples=300)
def test_visible_body_never_contains_the_marker(pieces):
    raw = "".join(pieces)
    visible, _thought = parse_quietly(raw)
    assert FMT.marker not in visible


@given(visible=safe_text, thought=safe_text)
@settings(max_examples=300)
def test_single_box_round_trips(visible, thought):
    raw = f"{visible}{FMT.marker} {thought}{FMT.terminator}"
    got_visible, got_thought = parse_thought_box(raw, FMT)
    assert got_visible == visible.rstrip()
    assert got_thought == thought.strip()


@given(text=safe_text)
@settings(max_examples=200)
def test_text_without_marker_passes_through_unchanged(text):
    assert parse_thought_box(text, FMT) == (text, None)


def test_unterminated_box_warns_and_keeps_the_tail_as_thought():
    raw = "Sounds good to me.\n\n[What I really think: not convinced"
    with pytest.warns(UnterminatedThoughtBox):
        visible, thought = parse_thought_box(raw)
    assert visible == "Sounds good to me."
    assert thought == "not convinced"


def test_multiple_boxes_keep_only_the_last_thought():
    raw = (
        "Para one. [What I really think: first doubt]\n\n"
        "Para two. [What I really think: second doubt]"
    )
    visible, thought = parse_thought_box(raw)
    assert thought == "second doubt"
    assert "[What I really think:" not in visible
    assert visible.startswith("Para one.")
    assert "Para two." in visible


def test_nested_brackets_inside_the_thought_survive():
    raw = "Body. [What I really think: key point [see notes] here]"
    visible, thought = parse_thought_box(raw)
    assert visible == "Body."
    assert thought == "key point [see notes] here"


def test_custom_format_is_honoured():
    fmt = ThoughtBoxFormat(marker="<<думаю:", terminator=">>")
    visible, thought = parse_thought_box("Ok. <<думаю: hmm>>", fmt)
    assert visible == "Ok."
    assert thought == "hmm"


def test_format_validation():
    with pytest.raises(ValueError):
        ThoughtBoxFormat(marker="")
    with pytest.raises(ValueError):
        ThoughtBoxFormat(terminator="")


def test_terminator_only_text_is_untouched():
    assert parse_thought_box("A bracket ] in prose.") == (
        "A bracket ] in prose.",
        None,
    )
