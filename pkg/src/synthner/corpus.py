"""Corpus data model: labels, spans, annotated sentences, and their integrity checks.

All types are immutable after construction and safe to share between threads.
Span offsets count Unicode code points of the surface text, never bytes, so
fixtures behave identically across platforms and language runtimes.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Iterator

from ._util import atomic_write

__all__ = [
    "Label",
    "LabelSet",
    "Span",
    "SampleProvenance",
    "AnnotatedSentence",
    "Corpus",
    "DataFormatError",
    "validate_sentence",
    "validate_corpus",
    "read_corpus_jsonl",
    "write_corpus_jsonl",
    "read_labelset",
    "write_labelset",
    "infer_labelset",
]

FORBIDDEN_LABEL_CHARS = set('<>"\n')


class DataFormatError(ValueError):
    """An input file does not match the documented schema."""


@dataclass(frozen=True)
class Label:
    """A named entity class, e.g. Medikation."""

    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("label name must be non-empty")
        bad = FORBIDDEN_LABEL_CHARS.intersection(self.name)
        if bad:
            raise ValueError(f"label name contains forbidden characters: {sorted(bad)!r}")


@dataclass(frozen=True)
class LabelSet:
    """Ordered collection of unique labels."""

    labels: tuple[Label, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("labelset must not be empty")
        names = [l.name for l in self.labels]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate label names: {names!r}")

    @classmethod
    def of(cls, *names: str) -> "LabelSet":
        return cls(tuple(Label(n) for n in names))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.labels)

    def __contains__(self, item: object) -> bool:
        name = item.name if isinstance(item, Label) else item
        return name in self.names

    def __iter__(self) -> Iterator[Label]:
        return iter(self.labels)


@dataclass(frozen=True, order=True)
class Span:
    """Half-open character interval [start, end) carrying a label name."""

    start: int
    end: int
    label: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"span requires 0 <= start < end, got [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SampleProvenance:
    """Where a synthesized sentence came from: sample index plus decoding parameters."""

    sample_index: int
    temperature: float
    top_p: float
    seed: int
    backend_id: str
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if self.sample_index < 0:
            raise ValueError("sample_index must be non-negative")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class AnnotatedSentence:
    """Markup-free surface text plus labeled character spans.

    Spans are normalized to (start, end) order at construction. Structural
    problems (out-of-bounds spans, overlap, markup residue, unknown labels)
    are *not* rejected here; they are reported by :func:`validate_sentence`
    so that curation can account for them instead of crashing.
    """

    id: str
    text: str
    spans: tuple[Span, ...] = ()
    provenance: SampleProvenance | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "spans", tuple(sorted(self.spans)))


@dataclass(frozen=True)
class Corpus:
    """Ordered collection of annotated sentences under one labelset."""

    sentences: tuple[AnnotatedSentence, ...]
    labelset: LabelSet

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[AnnotatedSentence]:
        return iter(self.sentences)


_MARKUP_RESIDUE = ("<s>", "</s>", "<class=")


def validate_sentence(s: AnnotatedSentence, ls: LabelSet | None = None) -> list[str]:
    """Return all invariant violations of a sentence; empty list means ok.

    Violations are reported as ``"code: detail"`` strings. Checks bounds,
    pairwise overlap, label charset, markup residue in the text, and (when a
    labelset is given) label membership. Never mutates or raises.
    """
    violations: list[str] = []
    n = len(s.text)
    for sp in s.spans:
        if sp.end > n:
            violations.append(f"span-out-of-bounds: [{sp.start}, {sp.end}) exceeds text length {n}")
        bad = FORBIDDEN_LABEL_CHARS.intersection(sp.label)
        if not sp.label or bad:
            violations.append(f"label-charset: {sp.label!r}")
        if ls is not None and sp.label not in ls:
            violations.append(f"unknown-label: {sp.label!r}")
    for a, b in zip(s.spans, s.spans[1:]):
        if b.start < a.end:
            violations.append(f"span-overlap: [{a.start}, {a.end}) and [{b.start}, {b.end})")
    for residue in _MARKUP_RESIDUE:
        if residue in s.text:
            violations.append(f"markup-residue: {residue!r} in text")
    return violations


def validate_corpus(c: Corpus) -> list[str]:
    """Corpus-level violations: duplicate ids, plus per-sentence violations."""
    violations: list[str] = []
    seen: set[str] = set()
    for s in c.sentences:
        if s.id in seen:
            violations.append(f"duplicate-id: {s.id!r}")
        seen.add(s.id)
        violations.extend(f"{s.id}: {v}" for v in validate_sentence(s, c.labelset))
    return violations


def _provenance_to_dict(p: SampleProvenance) -> dict:
    d = {
        "sample_index": p.sample_index,
        "temperature": p.temperature,
        "top_p": p.top_p,
        "seed": p.seed,
        "backend_id": p.backend_id,
    }
    if p.max_tokens is not None:
        d["max_tokens"] = p.max_tokens
    return d


def _provenance_from_dict(d: dict) -> SampleProvenance:
    return SampleProvenance(
        sample_index=d["sample_index"],
        temperature=d["temperature"],
        top_p=d["top_p"],
        seed=d["seed"],
        backend_id=d["backend_id"],
        max_tokens=d.get("max_tokens"),
    )


def sentence_to_record(s: AnnotatedSentence) -> dict:
    return {
        "id": s.id,
        "text": s.text,
        "spans": [{"start": sp.start, "end": sp.end, "label": sp.label} for sp in s.spans],
        "provenance": _provenance_to_dict(s.provenance) if s.provenance else None,
    }


def sentence_from_record(d: dict) -> AnnotatedSentence:
    prov = d.get("provenance")
    return AnnotatedSentence(
        id=d["id"],
        text=d["text"],
        spans=tuple(Span(sp["start"], sp["end"], sp["label"]) for sp in d["spans"]),
        provenance=_provenance_from_dict(prov) if prov else None,
    )


def write_corpus_jsonl(c: Corpus | Iterable[AnnotatedSentence], path) -> None:
    """One sentence per line; field names are part of the wire format."""
    sentences = c.sentences if isinstance(c, Corpus) else tuple(c)
    with atomic_write(path) as f:
        for s in sentences:
            f.write(json.dumps(sentence_to_record(s), ensure_ascii=False) + "\n")


def read_corpus_jsonl(path, labelset: LabelSet | None = None) -> Corpus:
    """Read a corpus JSONL file; schema violations report the offending line number.

    Without an explicit labelset, one is inferred from the labels observed
    in the file.
    """
    sentences: list[AnnotatedSentence] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                sentences.append(sentence_from_record(record))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
    if labelset is None:
        labelset = infer_labelset(sentences)
    return Corpus(tuple(sentences), labelset)


def infer_labelset(sentences: Iterable[AnnotatedSentence]) -> LabelSet:
    names = sorted({sp.label for s in sentences for sp in s.spans})
    if not names:
        raise DataFormatError("cannot infer a labelset from an unannotated corpus")
    return LabelSet.of(*names)


def write_labelset(ls: LabelSet, path) -> None:
    with atomic_write(path) as f:
        json.dump({"labels": list(ls.names)}, f, ensure_ascii=False)
        f.write("\n")


def read_labelset(path) -> LabelSet:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
            return LabelSet.of(*data["labels"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: {exc}") from exc


def default_sentence_id(backend_id: str, sample_index: int, ordinal: int) -> str:
    """Default id scheme for synthesized sentences."""
    return f"{backend_id}:{sample_index}:{ordinal}"


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)
