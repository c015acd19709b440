"""Corpus file access: JSON-lines sentences plus a labels.json labelset.

The trainer talks to the corpus tooling exclusively through these files;
nothing else is shared. Readers validate on the way in and the writer
validates on the way out, so a model can never emit spans that a
downstream reader would reject.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


class DataError(ValueError):
    """Raised for malformed corpus or labelset files."""


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int
    label: str


@dataclass(frozen=True)
class Sentence:
    """Surface text plus labeled character spans, sorted by position."""

    id: str
    text: str
    spans: tuple[Span, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "spans", tuple(sorted(self.spans)))


def validate_spans(text: str, spans, origin: str) -> None:
    """Reject out-of-bounds, empty, or overlapping spans."""
    previous_end = 0
    for span in sorted(spans):
        if not isinstance(span.label, str) or not span.label:
            raise DataError(f"{origin}: span label must be a non-empty string")
        if not (0 <= span.start < span.end <= len(text)):
            raise DataError(f"{origin}: span ({span.start}, {span.end}) out of bounds")
        if span.start < previous_end:
            raise DataError(f"{origin}: overlapping spans at {span.start}")
        previous_end = span.end


def read_labels(path) -> tuple[str, ...]:
    """Read a labelset file of the form {"labels": ["A", "B", ...]}."""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    labels = data.get("labels") if isinstance(data, dict) else None
    if not isinstance(labels, list) or not labels:
        raise DataError(f"{path}: expected a non-empty \"labels\" list")
    for label in labels:
        if not isinstance(label, str) or not label:
            raise DataError(f"{path}: labels must be non-empty strings")
    if len(set(labels)) != len(labels):
        raise DataError(f"{path}: duplicate labels")
    return tuple(labels)


def _span_from_record(record, origin: str) -> Span:
    try:
        return Span(int(record["start"]), int(record["end"]), record["label"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{origin}: malformed span {record!r}") from exc


def read_sentences(path) -> list[Sentence]:
    """Read a JSON-lines corpus; unknown record fields are ignored."""
    sentences: list[Sentence] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            origin = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{origin}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise DataError(f"{origin}: expected an object")
            try:
                sentence_id, text = record["id"], record["text"]
            except KeyError as exc:
                raise DataError(f"{origin}: missing field {exc}") from exc
            if not isinstance(sentence_id, str) or not isinstance(text, str):
                raise DataError(f"{origin}: id and text must be strings")
            if sentence_id in seen:
                raise DataError(f"{origin}: duplicate sentence id {sentence_id!r}")
            seen.add(sentence_id)
            spans = tuple(
                _span_from_record(r, origin) for r in (record.get("spans") or ())
            )
            validate_spans(text, spans, origin)
            sentences.append(Sentence(sentence_id, text, spans))
    return sentences


def write_sentences(path, sentences) -> None:
    """Write a corpus in the canonical JSON-lines schema, validating first."""
    payload = []
    for s in sentences:
        validate_spans(s.text, s.spans, s.id)
        payload.append(
            {
                "id": s.id,
                "text": s.text,
                "spans": [
                    {"start": sp.start, "end": sp.end, "label": sp.label}
                    for sp in s.spans
                ],
                "provenance": None,
            }
        )
    with open(path, "w", encoding="utf-8") as f:
        for record in payload:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
