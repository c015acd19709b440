"""Inline markup codec for annotated sentences.

The format (one sentence per segment)::

    <s>Zur Behandlung wird <class="Medikation">Ibuprofen</class> gegeben.</s>

Tags are exact-match and case-sensitive: ``<s>``, ``</s>``, ``</class>``, and
``<class="LABEL">`` where LABEL is one or more characters other than ``"``,
``<``, ``>``, or newline. The attribute is always double-quoted and tags carry
no internal whitespace. There is no entity escaping, so sentences whose text
contains ``<`` or ``>`` cannot be encoded. A ``<`` in parsed input that does
not match the grammar is a malformed tag, never literal text: legitimate
generated text never contains one, and treating it as text would make the
grammar ambiguous.

Parsing is total and deterministic: any byte sequence yields sentences plus
diagnostics, never an exception. Malformed segments are reported (first error
wins) and dropped, not repaired.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .corpus import (
    AnnotatedSentence,
    LabelSet,
    SampleProvenance,
    Span,
    default_sentence_id,
    validate_sentence,
)

__all__ = [
    "DiagnosticKind",
    "ParseDiagnostic",
    "RawSample",
    "EncodeError",
    "encode_sentence",
    "parse_sentence",
    "parse_document",
    "split_segments",
    "strip_tags_lenient",
]

SENTENCE_OPEN = "<s>"
SENTENCE_CLOSE = "</s>"
CLASS_CLOSE = "</class>"

# attribute-shaped tag: <name="value">
_ATTR_TAG = re.compile(r'<([A-Za-z][A-Za-z0-9_-]*)="([^"<>\n]+)">')


class DiagnosticKind(enum.Enum):
    MISSING_SENTENCE_CLOSE = "MissingSentenceClose"
    UNCLOSED_CLASS_TAG = "UnclosedClassTag"
    STRAY_CLOSE = "StrayClose"
    NESTED_OPEN = "NestedOpen"
    MALFORMED_TAG = "MalformedTag"
    UNKNOWN_ATTRIBUTE = "UnknownAttribute"


@dataclass(frozen=True)
class ParseDiagnostic:
    """Why one segment failed to parse.

    ``position`` is a character offset into the raw segment (the segment
    starts at its ``<s>``).
    """

    sample_index: int
    segment_index: int
    kind: DiagnosticKind
    position: int


@dataclass(frozen=True)
class RawSample:
    """One unparsed generation output with its sampling provenance."""

    sample_index: int
    text: str
    provenance: SampleProvenance


class EncodeError(ValueError):
    """The sentence cannot be represented in the markup format."""


def encode_sentence(s: AnnotatedSentence) -> str:
    """Render a valid sentence as one markup segment.

    Non-span text is preserved verbatim, whitespace included. Raises
    :class:`EncodeError` for text containing ``<`` or ``>`` (unencodable)
    or for sentences with structural violations.
    """
    if "<" in s.text or ">" in s.text:
        raise EncodeError(f"text contains '<' or '>' and cannot be encoded: {s.text!r}")
    violations = validate_sentence(s)
    if violations:
        raise EncodeError(f"sentence {s.id!r} is not encodable: {violations}")
    parts: list[str] = [SENTENCE_OPEN]
    cursor = 0
    for sp in s.spans:
        parts.append(s.text[cursor : sp.start])
        parts.append(f'<class="{sp.label}">{s.text[sp.start : sp.end]}{CLASS_CLOSE}')
        cursor = sp.end
    parts.append(s.text[cursor:])
    parts.append(SENTENCE_CLOSE)
    return "".join(parts)


def _scan_segment(segment: str) -> tuple[str, tuple[Span, ...]] | tuple[DiagnosticKind, int]:
    """Scan one segment; return (text, spans) or (diagnostic kind, position)."""
    if not segment.startswith(SENTENCE_OPEN):
        return DiagnosticKind.MALFORMED_TAG, 0
    pos = len(SENTENCE_OPEN)
    out: list[str] = []
    out_len = 0
    spans: list[Span] = []
    open_label: str | None = None
    open_start = 0
    while True:
        lt = segment.find("<", pos)
        if lt == -1:
            return DiagnosticKind.MISSING_SENTENCE_CLOSE, len(segment)
        literal = segment[pos:lt]
        out.append(literal)
        out_len += len(literal)
        if segment.startswith(SENTENCE_CLOSE, lt):
            if open_label is not None:
                return DiagnosticKind.UNCLOSED_CLASS_TAG, lt
            return "".join(out), tuple(spans)
        if segment.startswith(CLASS_CLOSE, lt):
            if open_label is None:
                return DiagnosticKind.STRAY_CLOSE, lt
            if out_len > open_start:  # zero-width tagged regions annotate nothing
                spans.append(Span(open_start, out_len, open_label))
            open_label = None
            pos = lt + len(CLASS_CLOSE)
            continue
        m = _ATTR_TAG.match(segment, lt)
        if m:
            if m.group(1) != "class":
                return DiagnosticKind.UNKNOWN_ATTRIBUTE, lt
            if open_label is not None:
                return DiagnosticKind.NESTED_OPEN, lt
            open_label = m.group(2)
            open_start = out_len
            pos = m.end()
            continue
        return DiagnosticKind.MALFORMED_TAG, lt


def parse_sentence(
    markup: str,
    ls: LabelSet | None = None,
    strict_labels: bool = True,
    *,
    sentence_id: str = "0",
    sample_index: int = 0,
    segment_index: int = 0,
) -> AnnotatedSentence | ParseDiagnostic:
    """Parse one segment that begins at a ``<s>`` tag.

    On success the sentence text is the markup with all tags stripped and the
    spans cover exactly the tagged regions. Labels outside ``ls`` are not an
    error at this level (label policy belongs to curation): with
    ``strict_labels`` they are recorded on the span as-is for downstream
    filtering; without it such spans are silently dropped and only the
    known-label annotations survive.

    Content after the closing ``</s>`` belongs to no sentence and is ignored,
    like content before the first ``<s>`` of a document.
    """
    result = _scan_segment(markup)
    if isinstance(result[0], DiagnosticKind):
        kind, position = result
        return ParseDiagnostic(sample_index, segment_index, kind, position)
    text, spans = result
    if not strict_labels and ls is not None:
        spans = tuple(sp for sp in spans if sp.label in ls)
    return AnnotatedSentence(id=sentence_id, text=text, spans=spans)


def split_segments(text: str) -> list[tuple[int, str]]:
    """Split a document on ``<s>`` occurrences into (offset, segment) pairs.

    Each segment starts at its ``<s>`` and runs to the next ``<s>`` or the end
    of the document. Text before the first ``<s>`` is not a segment.
    """
    segments: list[tuple[int, str]] = []
    start = text.find(SENTENCE_OPEN)
    while start != -1:
        nxt = text.find(SENTENCE_OPEN, start + len(SENTENCE_OPEN))
        end = nxt if nxt != -1 else len(text)
        segments.append((start, text[start:end]))
        start = nxt
    return segments


def parse_document(
    raw: RawSample,
    ls: LabelSet | None = None,
    strict_labels: bool = True,
) -> tuple[list[AnnotatedSentence], list[ParseDiagnostic]]:
    """Parse every segment of a raw sample independently.

    One malformed segment never discards its neighbors. Sentence ids use the
    segment index within the sample as the ordinal, so ids are stable under
    re-parsing and a dropped segment leaves a visible gap.
    """
    sentences: list[AnnotatedSentence] = []
    diagnostics: list[ParseDiagnostic] = []
    backend_id = raw.provenance.backend_id if raw.provenance else ""
    for segment_index, (_, segment) in enumerate(split_segments(raw.text)):
        result = parse_sentence(
            segment,
            ls,
            strict_labels,
            sentence_id=default_sentence_id(backend_id, raw.sample_index, segment_index),
            sample_index=raw.sample_index,
            segment_index=segment_index,
        )
        if isinstance(result, ParseDiagnostic):
            diagnostics.append(result)
        else:
            sentences.append(
                AnnotatedSentence(result.id, result.text, result.spans, raw.provenance)
            )
    return sentences, diagnostics


_ANY_TAG = re.compile(r'</?s>|</class>|<[A-Za-z][A-Za-z0-9_-]*="[^"<>\n]*">')


def strip_tags_lenient(segment: str) -> str:
    """Best-effort surface text of a possibly malformed segment.

    Removes everything that looks like a tag. Used to give syntactically
    invalid segments a deduplication key comparable to parsed sentences.
    """
    return _ANY_TAG.sub("", segment)
