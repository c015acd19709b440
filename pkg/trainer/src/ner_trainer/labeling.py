"""Projection between character spans and per-token tags.

Tags are plain label names plus ``O`` for outside. A token takes a span's
label only when the span covers a strict majority of the token's
characters; among several overlapping spans the largest overlap wins and
position breaks ties. Predicted spans are rebuilt by merging runs of
consecutive same-label tokens, so span boundaries always snap to token
boundaries.
"""

from __future__ import annotations

from .data import Span

OUTSIDE = "O"


def spans_to_tags(offsets, spans) -> list[str]:
    tags = []
    for start, end in offsets:
        best_label, best_overlap = OUTSIDE, 0
        for span in sorted(spans):
            overlap = min(end, span.end) - max(start, span.start)
            if overlap > best_overlap:
                best_label, best_overlap = span.label, overlap
        # Strict majority: exactly half the token is not enough.
        tags.append(best_label if 2 * best_overlap > end - start else OUTSIDE)
    return tags


def tags_to_spans(offsets, tags) -> list[Span]:
    if len(offsets) != len(tags):
        raise ValueError("offsets and tags must have equal length")
    spans: list[Span] = []
    current_label: str | None = None
    current_start = current_end = 0
    for (start, end), tag in zip(offsets, tags):
        if tag == current_label and tag != OUTSIDE:
            current_end = end
            continue
        if current_label not in (None, OUTSIDE):
            spans.append(Span(current_start, current_end, current_label))
        current_label, current_start, current_end = tag, start, end
    if current_label not in (None, OUTSIDE):
        spans.append(Span(current_start, current_end, current_label))
    return spans
