"""Character-wise strict NER scoring with label aliasing.

Scoring treats annotation as a per-character classification: for each
label, true positives are characters carrying that label in both gold
and prediction. Counts are accumulated with interval arithmetic over
span overlaps; sentences are aligned by id and must carry identical
text, since character indices are meaningless across differing texts.

An alias map renames prediction labels into the gold label space before
scoring (for models trained on a different tag set); prediction labels
that are neither aliased nor in the gold labelset cannot be scored and
are dropped, with the drop count surfaced in the report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from ._util import atomic_write
from .corpus import AnnotatedSentence, Corpus, DataFormatError, LabelSet, Span

OUTSIDE = None


def char_labels(s: AnnotatedSentence) -> list[str | None]:
    """One label per code point; ``None`` marks unlabeled positions.

    Whitespace inside a span is labeled like any other character: a span
    is a contiguous character interval.
    """
    labels: list[str | None] = [OUTSIDE] * len(s.text)
    previous_end = 0
    for span in s.spans:  # sorted by construction
        if span.start < previous_end:
            raise ValueError(f"overlapping spans in sentence {s.id!r}")
        if span.end > len(s.text):
            raise ValueError(f"span out of bounds in sentence {s.id!r}")
        for i in range(span.start, span.end):
            labels[i] = span.label
        previous_end = span.end
    return labels


def read_alias_map(path) -> dict[str, str]:
    """Small key-value JSON file, e.g. ``{"Drug": "Medikation"}``."""
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid alias map: {exc}") from exc
    if not isinstance(data, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in data.items()
    ):
        raise DataFormatError("alias map must be a flat string-to-string object")
    return data


def apply_alias(
    pred: Corpus, alias: Mapping[str, str], target: LabelSet
) -> tuple[Corpus, int]:
    """Rename prediction labels into the target label space.

    Mapped labels are replaced by their targets; labels already in the
    target set pass through; anything else is dropped. Returns the
    rewritten corpus and the dropped-span count.
    """
    for source, dest in alias.items():
        if dest not in target:
            raise DataFormatError(f"alias target {dest!r} not in labelset")
    dropped = 0
    sentences = []
    for s in pred.sentences:
        spans = []
        for span in s.spans:
            label = alias.get(span.label, span.label)
            if label not in target:
                dropped += 1
                continue
            spans.append(Span(span.start, span.end, label))
        sentences.append(AnnotatedSentence(s.id, s.text, tuple(spans), s.provenance))
    return Corpus(tuple(sentences), target), dropped


@dataclass(frozen=True)
class ScoreRow:
    """Metrics for one label; ``undefined`` lists zero-denominator metrics."""

    label: str
    precision: float
    recall: float
    f1: float
    gold_chars: int
    gold_entities: int
    undefined: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScoreReport:
    rows: tuple[ScoreRow, ...]
    total: ScoreRow
    weighting: str
    span_exact: bool
    dropped_foreign_spans: int

    def row(self, label: str) -> ScoreRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def _metrics(tp: int, fp: int, fn: int) -> tuple[float, float, float, tuple[str, ...]]:
    undefined: list[str] = []
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    return precision, recall, f1, tuple(undefined)


def _overlap_chars(a: Sequence[Span], b: Sequence[Span]) -> int:
    """Total intersection length between two sets of disjoint intervals."""
    total = 0
    for x in a:
        for y in b:
            total += max(0, min(x.end, y.end) - max(x.start, y.start))
    return total


def _aligned_pairs(
    gold: Corpus, pred: Corpus
) -> list[tuple[AnnotatedSentence, AnnotatedSentence]]:
    gold_by_id = {s.id: s for s in gold.sentences}
    pred_by_id = {s.id: s for s in pred.sentences}
    if set(gold_by_id) != set(pred_by_id):
        missing = set(gold_by_id) ^ set(pred_by_id)
        raise DataFormatError(
            f"gold and prediction ids differ ({len(missing)} unmatched, "
            f"e.g. {sorted(missing)[:3]})"
        )
    pairs = []
    for sid, g in gold_by_id.items():
        p = pred_by_id[sid]
        if g.text != p.text:
            raise DataFormatError(f"text mismatch for sentence {sid!r}")
        pairs.append((g, p))
    return pairs


def score(
    gold: Corpus,
    pred: Corpus,
    alias: Mapping[str, str] | None = None,
    *,
    weighting: str = "chars",
    span_exact: bool = False,
) -> ScoreReport:
    """Score predictions against gold, per label plus a weighted total.

    Default counting is character-wise (TP/FP/FN over code points);
    ``span_exact`` switches to exact-boundary entity counting. The total
    row averages per-label metrics weighted by gold character support, or
    by gold entity count with ``weighting="entities"``.
    """
    if weighting not in ("chars", "entities"):
        raise ValueError("weighting must be 'chars' or 'entities'")
    pred, dropped = apply_alias(pred, alias or {}, gold.labelset)
    pairs = _aligned_pairs(gold, pred)

    labels = list(gold.labelset.names)
    tp = {c: 0 for c in labels}
    fp = {c: 0 for c in labels}
    fn = {c: 0 for c in labels}
    gold_chars = {c: 0 for c in labels}
    gold_entities = {c: 0 for c in labels}

    for g, p in pairs:
        for c in labels:
            g_spans = [sp for sp in g.spans if sp.label == c]
            p_spans = [sp for sp in p.spans if sp.label == c]
            gold_entities[c] += len(g_spans)
            g_size = sum(sp.end - sp.start for sp in g_spans)
            gold_chars[c] += g_size
            if span_exact:
                hits = len({(sp.start, sp.end) for sp in g_spans}
                           & {(sp.start, sp.end) for sp in p_spans})
                tp[c] += hits
                fp[c] += len(p_spans) - hits
                fn[c] += len(g_spans) - hits
            else:
                hits = _overlap_chars(g_spans, p_spans)
                p_size = sum(sp.end - sp.start for sp in p_spans)
                tp[c] += hits
                fp[c] += p_size - hits
                fn[c] += g_size - hits

    rows = []
    for c in labels:
        precision, recall, f1, undefined = _metrics(tp[c], fp[c], fn[c])
        rows.append(
            ScoreRow(c, precision, recall, f1, gold_chars[c], gold_entities[c], undefined)
        )

    weights = gold_chars if weighting == "chars" else gold_entities
    total_weight = sum(weights.values())
    if total_weight > 0:
        averaged = [
            sum(getattr(r, m) * weights[r.label] for r in rows) / total_weight
            for m in ("precision", "recall", "f1")
        ]
        total = ScoreRow(
            "Total",
            averaged[0],
            averaged[1],
            averaged[2],
            sum(gold_chars.values()),
            sum(gold_entities.values()),
        )
    else:
        total = ScoreRow(
            "Total", 0.0, 0.0, 0.0, 0, 0, ("precision", "recall", "f1")
        )
    return ScoreReport(
        rows=tuple(rows),
        total=total,
        weighting=weighting,
        span_exact=span_exact,
        dropped_foreign_spans=dropped,
    )


# --------------------------------------------------------------------------
# Report files


def score_report_to_dict(report: ScoreReport) -> dict:
    def row(r: ScoreRow) -> dict:
        return {
            "precision": r.precision,
            "recall": r.recall,
            "f1": r.f1,
            "gold_chars": r.gold_chars,
            "gold_entities": r.gold_entities,
            "undefined": list(r.undefined),
        }

    return {
        "labels": {r.label: row(r) for r in report.rows},
        "total": row(report.total),
        "weighting": report.weighting,
        "span_exact": report.span_exact,
        "dropped_foreign_spans": report.dropped_foreign_spans,
    }


def write_score_report_json(report: ScoreReport, path) -> None:
    with atomic_write(path) as f:
        json.dump(score_report_to_dict(report), f, ensure_ascii=False, indent=2)
        f.write("\n")


def format_score_table(report: ScoreReport) -> str:
    """Metrics as rows, labels as columns, Total last."""
    columns = [r.label for r in report.rows] + ["Total"]
    all_rows = list(report.rows) + [report.total]
    lines = ["\t" + "\t".join(columns)]
    for metric, heading in (("precision", "Pr"), ("recall", "Re"), ("f1", "F1")):
        cells = [f"{getattr(r, metric):.3f}" for r in all_rows]
        lines.append(heading + "\t" + "\t".join(cells))
    if report.dropped_foreign_spans:
        lines.append(f"# dropped foreign prediction spans: {report.dropped_foreign_spans}")
    return "\n".join(lines) + "\n"
