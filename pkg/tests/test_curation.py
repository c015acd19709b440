import json
import random

import pytest

from synthner import (
    AnnotatedSentence,
    Corpus,
    FilterReport,
    RawSample,
    Span,
    SplitSpec,
    apply_filters,
    bio_tags,
    corpus_stats,
    decode_bio,
    dedup_key,
    encode_sentence,
    export,
    format_bio,
    format_report_tsv,
    read_corpus_jsonl,
    report_from_counts,
    report_to_dict,
    split,
    token_strings,
    tokenize,
    write_corpus_jsonl,
)
from synthner.curation import (
    DEDUP_LAST_STAGE_ORDER,
    DEFAULT_STAGE_ORDER,
    STAGE_DISPLAY_NAMES,
    write_report_json,
)

from _gen import LABELS3, make_provenance, random_corpus


class TestAccountingConventions:
    def test_published_counts_replay(self):
        # The historical run this toolkit reproduces: 17776 raw segments
        # cut down to 9845 over the four standard stages.
        report = report_from_counts(17776, [16603, 11328, 11326, 9845])
        assert [s.pct_of_baseline for s in report.stages] == [93, 64, 64, 55]
        assert [s.impact for s in report.stages] == [15, 66, 0, 18]
        assert [s.removed for s in report.stages] == [1173, 5275, 2, 1481]
        assert report.final_count == 9845

    def test_pct_of_baseline_rounds_half_away_from_zero(self):
        report = report_from_counts(1000, [995, 985])
        assert report.stages[0].pct_of_baseline == 100  # 99.5 rounds up
        assert report.stages[1].pct_of_baseline == 99  # 98.5 rounds up

    def test_impact_floors_below_three_quarters(self):
        # Removals 5 and 3 of 8: 62.5% and 37.5% both floor.
        report = report_from_counts(10, [5, 2])
        assert [s.impact for s in report.stages] == [62, 37]

    def test_impact_carries_at_three_quarters(self):
        # Removals 7 and 2 of 9: 77.78% carries, 22.22% floors.
        report = report_from_counts(10, [3, 1])
        assert [s.impact for s in report.stages] == [78, 22]

    def test_no_removals_at_all(self):
        report = report_from_counts(5, [5, 5])
        assert [s.impact for s in report.stages] == [0, 0]
        assert [s.pct_of_baseline for s in report.stages] == [100, 100]

    def test_default_stage_names(self):
        report = report_from_counts(10, [9, 8, 7, 6])
        assert [s.name for s in report.stages] == [
            "no </s> tag",
            "duplicates removal",
            "invalid syntax removal",
            "invalid or no labels",
        ]

    def test_report_rejects_increasing_counts(self):
        with pytest.raises(ValueError):
            report_from_counts(10, [9, 11])

    def test_report_rejects_final_mismatch(self):
        stage = report_from_counts(10, [8]).stages[0]
        with pytest.raises(ValueError):
            FilterReport(baseline_count=10, stages=(stage,), final_count=7)


PROV = [make_provenance(0), make_provenance(1)]

# Ten segments with one planned fate each (default stage order):
#   close   removes s1 (no closing tag)
#   dedup   removes s2 (exact repeat of s0) and s3 (whitespace variant of s0)
#   syntax  removes s4 (stray close) and s9 (nested open)
#   labels  removes s5 (no annotations) and s6 (label outside the set)
# leaving s0, s7, s8.
RAW_FIXTURE = [
    RawSample(
        0,
        '<s>Gabe von <class="Medikation">ASS</class>.</s>\n'
        "<s>kein Ende hier\n"
        '<s>Gabe von <class="Medikation">ASS</class>.</s>\n'
        "<s>Gabe  von ASS.</s>\n"
        "<s></class>Stray hier.</s>\n"
        "<s>Kein Befund.</s>",
        PROV[0],
    ),
    RawSample(
        1,
        '<s><class="Symptom">Husten</class> seit Tagen.</s>\n'
        '<s>Therapie mit <class="Dosis">40 mg</class>.</s>\n'
        '<s>Diagnose: <class="Diagnose">Anämie</class>.</s>\n'
        '<s>Eins <class="X">zwei <class="Y">drei</s>',
        PROV[1],
    ),
]


class TestApplyFilters:
    def test_default_order_counts(self):
        corpus, report = apply_filters(RAW_FIXTURE, LABELS3)
        assert report.baseline_count == 10
        assert [s.sentences_remaining for s in report.stages] == [9, 7, 5, 3]
        assert [s.removed for s in report.stages] == [1, 2, 2, 2]
        assert report.final_count == 3
        assert [s.pct_of_baseline for s in report.stages] == [90, 70, 50, 30]
        # impacts: 1/7, 2/7, 2/7, 2/7 -> 14.29%, 28.57% x3, all floored
        assert [s.impact for s in report.stages] == [14, 28, 28, 28]

    def test_surviving_sentences(self):
        corpus, _ = apply_filters(RAW_FIXTURE, LABELS3)
        assert [s.text for s in corpus.sentences] == [
            "Gabe von ASS.",
            "Therapie mit 40 mg.",
            "Diagnose: Anämie.",
        ]
        assert [s.id for s in corpus.sentences] == ["mock:0:0", "mock:1:1", "mock:1:2"]
        assert corpus.sentences[0].spans == (Span(9, 12, "Medikation"),)
        assert corpus.sentences[0].provenance == PROV[0]

    def test_dedup_keeps_first_occurrence(self):
        corpus, _ = apply_filters(RAW_FIXTURE, LABELS3)
        kept = [s for s in corpus.sentences if s.text == "Gabe von ASS."]
        assert [s.id for s in kept] == ["mock:0:0"]

    def test_label_stage_detail(self):
        _, report = apply_filters(RAW_FIXTURE, LABELS3)
        assert dict(report.stages[3].detail) == {
            "zero_annotations": 1,
            "unknown_labels": 1,
        }

    def test_dedup_last_order(self):
        corpus, report = apply_filters(RAW_FIXTURE, LABELS3, DEDUP_LAST_STAGE_ORDER)
        assert [s.name for s in report.stages] == [
            STAGE_DISPLAY_NAMES[n] for n in DEDUP_LAST_STAGE_ORDER
        ]
        # syntax and labels fire before dedup; the whitespace variant s3
        # now falls to the label stage (it has no annotations), and only
        # the exact repeat s2 is left for dedup to remove.
        assert [s.sentences_remaining for s in report.stages] == [9, 7, 4, 3]
        assert {s.text for s in corpus.sentences} == {
            "Gabe von ASS.",
            "Therapie mit 40 mg.",
            "Diagnose: Anämie.",
        }

    def test_input_order_does_not_matter(self):
        a, report_a = apply_filters(RAW_FIXTURE, LABELS3)
        b, report_b = apply_filters(list(reversed(RAW_FIXTURE)), LABELS3)
        assert a.sentences == b.sentences
        assert report_a == report_b

    def test_pipeline_idempotent_on_clean_corpus(self):
        corpus, _ = apply_filters(RAW_FIXTURE, LABELS3)
        re_encoded = "\n".join(encode_sentence(s) for s in corpus.sentences)
        again, report = apply_filters(
            [RawSample(0, re_encoded, PROV[0])], LABELS3
        )
        assert report.baseline_count == report.final_count == 3
        assert [s.text for s in again.sentences] == [s.text for s in corpus.sentences]
        assert [s.spans for s in again.sentences] == [s.spans for s in corpus.sentences]

    def test_bad_stage_order_rejected(self):
        with pytest.raises(ValueError):
            apply_filters(RAW_FIXTURE, LABELS3, ("close", "dedup"))
        with pytest.raises(ValueError):
            apply_filters(RAW_FIXTURE, LABELS3, ("close", "close", "syntax", "labels"))

    def test_empty_input(self):
        corpus, report = apply_filters([], LABELS3)
        assert corpus.sentences == ()
        assert report.baseline_count == 0
        assert report.final_count == 0


class TestDedupKey:
    def test_whitespace_runs_collapse(self):
        a = AnnotatedSentence("a", "Kein  Befund. ")
        b = AnnotatedSentence("b", "Kein Befund.")
        assert dedup_key(a) == dedup_key(b)

    def test_case_sensitive(self):
        a = AnnotatedSentence("a", "Kein Befund.")
        b = AnnotatedSentence("b", "kein befund.")
        assert dedup_key(a) != dedup_key(b)

    def test_unicode_normalization(self):
        composed = AnnotatedSentence("a", "Anämie")
        decomposed = AnnotatedSentence("b", "Anämie")
        assert dedup_key(composed) == dedup_key(decomposed)

    def test_annotations_ignored(self):
        a = AnnotatedSentence("a", "Gabe von ASS.", (Span(9, 12, "Medikation"),))
        b = AnnotatedSentence("b", "Gabe von ASS.")
        assert dedup_key(a) == dedup_key(b)


class TestReportFiles:
    REPORT = report_from_counts(10, [9, 7, 5, 3])

    def test_tsv_layout(self):
        lines = format_report_tsv(self.REPORT).splitlines()
        assert lines[0] == "Applied Filter\t#Sentences\t% of Baseline\tImpact"
        assert lines[1] == "Baseline\t10\t100%\t"
        assert lines[2] == "no </s> tag\t9\t90%\t14%"
        assert lines[-1] == "Final\t3\t30%\t"
        assert len(lines) == 7

    def test_json_shape(self, tmp_path):
        path = tmp_path / "report.json"
        write_report_json(self.REPORT, path)
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["baseline_count"] == 10
        assert data["final_count"] == 3
        assert [s["sentences_remaining"] for s in data["stages"]] == [9, 7, 5, 3]
        assert data == report_to_dict(self.REPORT)


class TestTokenizer:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("Pantoprazol 40 mg p.o.", ["Pantoprazol", "40", "mg", "p.o", "."]),
            ("", []),
            ("   ", []),
            ("1-0-0", ["1-0-0"]),
            ("...", [".", ".", "."]),
            ("(Wort)", ["(", "Wort", ")"]),
            ("Gabe, bitte!", ["Gabe", ",", "bitte", "!"]),
            (".", ["."]),
            ("-x-", ["-", "x", "-"]),
            ("a\t b\nc", ["a", "b", "c"]),
            ("z.B. Anämie", ["z.B", ".", "Anämie"]),
            ("'zitiert'", ["'", "zitiert", "'"]),
            ("875/125 mg", ["875/125", "mg"]),
        ],
    )
    def test_examples(self, text, expected):
        assert token_strings(text) == expected

    def test_spans_are_code_point_offsets(self):
        text = "Anämie schwer"
        assert tokenize(text) == [(0, 6), (7, 13)]

    def test_spans_ascending_and_within_chunks(self):
        spans = tokenize("(Beispiel-Text), bitte.")
        assert spans == sorted(spans)
        for a, b in spans:
            assert a < b

    def test_interior_slash_kept(self):
        assert token_strings("mg/dl") == ["mg/dl"]


class TestStats:
    def test_hand_tally(self):
        corpus = Corpus(
            (
                AnnotatedSentence("a", "Gabe von ASS.", (Span(9, 12, "Medikation"),)),
                AnnotatedSentence("b", "Therapie mit 40 mg.", (Span(13, 18, "Dosis"),)),
            ),
            LABELS3,
        )
        stats = corpus_stats(corpus)
        assert stats.sentence_count == 2
        # "Gabe von ASS ." plus "Therapie mit 40 mg ."
        assert stats.token_count == 9
        assert stats.entities() == {"Medikation": 1, "Dosis": 1, "Diagnose": 0}

    def test_every_label_reported_even_when_absent(self):
        corpus = Corpus((AnnotatedSentence("a", "x"),), LABELS3)
        assert corpus_stats(corpus).entities() == {
            "Medikation": 0,
            "Dosis": 0,
            "Diagnose": 0,
        }


class TestSplit:
    SPEC = SplitSpec(train=0.8, validation=0.1, test=0.1, seed=20240817)

    def test_ten_sentences(self):
        corpus = random_corpus(random.Random(5), 10)
        train, val, test = split(corpus, self.SPEC)
        assert (len(train.sentences), len(val.sentences), len(test.sentences)) == (8, 1, 1)

    def test_partition(self):
        corpus = random_corpus(random.Random(6), 137)
        train, val, test = split(corpus, self.SPEC)
        ids = [s.id for part in (train, val, test) for s in part.sentences]
        assert len(ids) == 137
        assert sorted(ids) == sorted(s.id for s in corpus.sentences)

    def test_deterministic_and_seed_sensitive(self):
        corpus = random_corpus(random.Random(7), 60)
        first = split(corpus, self.SPEC)
        second = split(corpus, self.SPEC)
        assert [c.sentences for c in first] == [c.sentences for c in second]
        other = split(corpus, SplitSpec(0.8, 0.1, 0.1, seed=1))
        assert [c.sentences for c in other] != [c.sentences for c in first]

    def test_shuffles_before_cutting(self):
        corpus = random_corpus(random.Random(8), 50)
        train, _, _ = split(corpus, self.SPEC)
        assert [s.id for s in train.sentences] != [s.id for s in corpus.sentences[:40]]

    def test_labelset_carried(self):
        corpus = random_corpus(random.Random(9), 10)
        for part in split(corpus, self.SPEC):
            assert part.labelset == corpus.labelset

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            split(Corpus((), LABELS3), self.SPEC)

    @pytest.mark.parametrize(
        "ratios",
        [(0.5, 0.2, 0.2), (0.8, 0.2, 0.1), (1.0, 0.0, 0.0), (0.9, 0.2, -0.1)],
    )
    def test_bad_ratios_rejected(self, ratios):
        train, validation, test = ratios
        with pytest.raises(ValueError):
            SplitSpec(train=train, validation=validation, test=test, seed=0)


class TestBio:
    def test_hand_example(self):
        s = AnnotatedSentence(
            "a",
            "Pantoprazol 40 mg 1-0-0 täglich",
            (Span(0, 11, "Medikation"), Span(12, 23, "Dosis")),
        )
        assert [tag for _, tag in bio_tags(s)] == [
            "B-Medikation",
            "B-Dosis",
            "I-Dosis",
            "I-Dosis",
            "O",
        ]

    def test_unannotated_sentence_all_o(self):
        s = AnnotatedSentence("a", "Kein Befund heute.")
        assert [tag for _, tag in bio_tags(s)] == ["O", "O", "O", "O"]

    def test_majority_overlap_joins_span(self):
        # Span covers half the token: ties count as inside.
        s = AnnotatedSentence("a", "abcd ef", (Span(0, 2, "X"),))
        assert [tag for _, tag in bio_tags(s)][0] == "B-X"

    def test_minority_overlap_stays_out(self):
        s = AnnotatedSentence("a", "abcd ef", (Span(0, 1, "X"),))
        assert [tag for _, tag in bio_tags(s)][0] == "O"

    def test_token_over_two_spans_prefers_larger_overlap(self):
        s = AnnotatedSentence("a", "abcdef", (Span(0, 2, "X"), Span(2, 6, "Y")))
        assert [tag for _, tag in bio_tags(s)] == ["B-Y"]

    def test_token_over_two_spans_tie_prefers_earlier(self):
        s = AnnotatedSentence("a", "abcdef", (Span(0, 3, "X"), Span(3, 6, "Y")))
        assert [tag for _, tag in bio_tags(s)] == ["B-X"]

    def test_adjacent_same_label_spans_get_two_b_tags(self):
        s = AnnotatedSentence("a", "ab cd", (Span(0, 2, "X"), Span(3, 5, "X")))
        assert [tag for _, tag in bio_tags(s)] == ["B-X", "B-X"]

    def test_decode_round_trip_on_aligned_spans(self):
        text = "Therapie mit Metformin 500 mg fortgesetzt"
        spans = (Span(13, 22, "Medikation"), Span(23, 29, "Dosis"))
        s = AnnotatedSentence("a", text, spans)
        tags = [tag for _, tag in bio_tags(s)]
        assert tuple(decode_bio(tokenize(text), tags)) == spans

    def test_decode_rejects_dangling_continuation(self):
        with pytest.raises(ValueError):
            decode_bio([(0, 1), (2, 3)], ["O", "I-X"])
        with pytest.raises(ValueError):
            decode_bio([(0, 1), (2, 3)], ["B-X", "I-Y"])

    def test_decode_rejects_junk_tags(self):
        with pytest.raises(ValueError):
            decode_bio([(0, 1)], ["Q-X"])

    def test_decode_length_mismatch(self):
        with pytest.raises(ValueError):
            decode_bio([(0, 1)], ["O", "O"])

    def test_format_bio_layout(self):
        corpus = Corpus(
            (
                AnnotatedSentence("a", "Gabe von ASS.", (Span(9, 12, "Medikation"),)),
                AnnotatedSentence("b", "Kein Befund."),
            ),
            LABELS3,
        )
        assert format_bio(corpus) == (
            "Gabe\tO\n"
            "von\tO\n"
            "ASS\tB-Medikation\n"
            ".\tO\n"
            "\n"
            "Kein\tO\n"
            "Befund\tO\n"
            ".\tO\n"
        )

    def test_format_bio_empty_corpus(self):
        assert format_bio(Corpus((), LABELS3)) == ""


class TestExport:
    def test_jsonl(self, tmp_path):
        corpus = random_corpus(random.Random(10), 12)
        direct = tmp_path / "direct.jsonl"
        via_export = tmp_path / "export.jsonl"
        write_corpus_jsonl(corpus, direct)
        export(corpus, "jsonl", via_export)
        assert via_export.read_bytes() == direct.read_bytes()
        assert read_corpus_jsonl(via_export, corpus.labelset).sentences == corpus.sentences

    def test_bio(self, tmp_path):
        corpus = Corpus((AnnotatedSentence("a", "Kein Befund."),), LABELS3)
        path = tmp_path / "out.bio"
        export(corpus, "bio", path)
        assert path.read_text(encoding="utf-8") == format_bio(corpus)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            export(Corpus((), LABELS3), "xml", tmp_path / "out.xml")
