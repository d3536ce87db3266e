"""Splitting recipient replies into a visible body and a private thought box.

Recipient personas are instructed to append their unspoken reaction inside a
bracketed marker block. The visible body is what the player (and any judge
that is not allowed to see inner thoughts) gets; the thought is kept
separately on the turn record.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

__all__ = [
    "ThoughtBoxFormat",
    "UnterminatedThoughtBox",
    "parse_thought_box",
]


class UnterminatedThoughtBox(UserWarning):
    """Marker present but no terminator follows it."""


@dataclass(frozen=True)
class ThoughtBoxFormat:
    """Marker/terminator pair delimiting the private-thought span."""

    marker: str = "[What I really think:"
    terminator: str = "]"

    def __post_init__(self) -> None:
        if not self.marker:
            raise ValueError("thought-box marker must be non-empty")
        if not self.terminator:
            raise ValueError("thought-box terminator must be non-empty")


def parse_thought_box(
    raw: str, fmt: ThoughtBoxFormat | None = None
) -> tuple[str, str | None]:
    """Return ``(visible_body, thought)`` for a raw recipient reply.

    The thought is the content between the last marker occurrence and the
    last terminator in the document tail; nested brackets inside the thought
    are preserved because only the final terminator closes the box. With no
    marker the reply passes through unchanged and the thought is ``None``.

    A marker without any terminator after it emits an
    :class:`UnterminatedThoughtBox` warning and treats everything after the
    marker as the thought.
    """
    fmt = fmt or ThoughtBoxFormat()
    marker_at = raw.rfind(fmt.marker)
    if marker_at < 0:
        return raw, None

    content_start = marker_at + len(fmt.marker)
    term_at = raw.rfind(fmt.terminator)
    if term_at < content_start:
        warnings.warn(
            "thought box opened but never terminated; treating the rest of "
            "the reply as the thought",
            UnterminatedThoughtBox,
            stacklevel=2,
        )
        thought = raw[content_start:].strip()
        visible = raw[:marker_at].rstrip()
    else:
        thought = raw[content_start:term_at].strip()
        visible = (raw[:marker_at] + raw[term_at + len(fmt.terminator) :]).rstrip()

    # A reply may quote more than one box; strip earlier ones too so the
    # visible body never leaks the marker, but keep the last box's thought.
    while fmt.marker in visible:
        visible, _ = parse_thought_box(visible, fmt)
    return visible, thought
