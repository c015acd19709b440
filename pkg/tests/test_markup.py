import random

import pytest

from synthner import AnnotatedSentence, EncodeError, RawSample, Span, encode_sentence
from synthner.markup import (
    DiagnosticKind,
    ParseDiagnostic,
    parse_document,
    parse_sentence,
    split_segments,
    strip_tags_lenient,
)

from _gen import LABELS3, make_provenance, random_sentence


def diag(markup: str) -> ParseDiagnostic:
    result = parse_sentence(markup)
    assert isinstance(result, ParseDiagnostic), f"expected a diagnostic, got {result!r}"
    return result


def sentence(markup: str, *args, **kw) -> AnnotatedSentence:
    result = parse_sentence(markup, *args, **kw)
    assert isinstance(result, AnnotatedSentence), f"parse failed: {result!r}"
    return result


class TestEncode:
    def test_plain_sentence(self):
        s = AnnotatedSentence("a", "Kein Befund.")
        assert encode_sentence(s) == "<s>Kein Befund.</s>"

    def test_spans_become_class_tags(self):
        s = AnnotatedSentence(
            "a",
            "Pantoprazol 40 mg p.o.",
            (Span(0, 11, "Medikation"), Span(12, 17, "Dosis")),
        )
        assert encode_sentence(s) == (
            '<s><class="Medikation">Pantoprazol</class> '
            '<class="Dosis">40 mg</class> p.o.</s>'
        )

    def test_adjacent_spans(self):
        s = AnnotatedSentence("a", "abcd", (Span(0, 2, "X"), Span(2, 4, "Y")))
        assert encode_sentence(s) == '<s><class="X">ab</class><class="Y">cd</class></s>'

    def test_whitespace_preserved_verbatim(self):
        s = AnnotatedSentence("a", "  zwei  Leerzeichen  ")
        assert encode_sentence(s) == "<s>  zwei  Leerzeichen  </s>"

    @pytest.mark.parametrize("text", ["a < b", "a > b"])
    def test_angle_brackets_unencodable(self, text):
        with pytest.raises(EncodeError):
            encode_sentence(AnnotatedSentence("a", text))

    def test_overlapping_spans_unencodable(self):
        s = AnnotatedSentence("a", "abcdef", (Span(0, 4, "X"), Span(2, 6, "Y")))
        with pytest.raises(EncodeError):
            encode_sentence(s)

    def test_out_of_bounds_span_unencodable(self):
        with pytest.raises(EncodeError):
            encode_sentence(AnnotatedSentence("a", "ab", (Span(0, 5, "X"),)))


class TestParseValid:
    def test_plain(self):
        s = sentence("<s>Kein Befund.</s>")
        assert s.text == "Kein Befund."
        assert s.spans == ()

    def test_offsets_count_code_points(self):
        s = sentence('<s>Übelkeit bei <class="Medikation">Ibuprofen</class></s>')
        assert s.text == "Übelkeit bei Ibuprofen"
        assert s.spans == (Span(13, 22, "Medikation"),)

    def test_span_at_both_edges(self):
        s = sentence('<s><class="X">ab</class>c<class="Y">de</class></s>')
        assert s.spans == (Span(0, 2, "X"), Span(3, 5, "Y"))

    def test_content_after_close_ignored(self):
        s = sentence("<s>abc</s> trailing junk")
        assert s.text == "abc"

    def test_zero_width_tagged_region_dropped(self):
        s = sentence('<s>ab<class="X"></class>cd</s>')
        assert s.text == "abcd"
        assert s.spans == ()

    def test_strict_labels_records_unknown_label(self):
        s = sentence('<s><class="Route">oral</class></s>', LABELS3, strict_labels=True)
        assert s.spans == (Span(0, 4, "Route"),)

    def test_lenient_labels_drops_unknown_spans(self):
        s = sentence('<s><class="Route">oral</class> ok</s>', LABELS3, strict_labels=False)
        assert s.text == "oral ok"
        assert s.spans == ()

    def test_label_value_may_contain_spaces(self):
        s = sentence('<s><class="Wirkstoff Gruppe">PPI</class></s>')
        assert s.spans[0].label == "Wirkstoff Gruppe"


class TestDiagnostics:
    def test_missing_sentence_close(self):
        d = diag("<s>kein Ende")
        assert d.kind is DiagnosticKind.MISSING_SENTENCE_CLOSE
        assert d.position == len("<s>kein Ende")

    def test_missing_close_wins_over_open_class_at_end(self):
        d = diag('<s>ab <class="X">cd')
        assert d.kind is DiagnosticKind.MISSING_SENTENCE_CLOSE

    def test_unclosed_class_tag(self):
        markup = '<s>ab <class="X">cd</s>'
        d = diag(markup)
        assert d.kind is DiagnosticKind.UNCLOSED_CLASS_TAG
        assert d.position == markup.index("</s>")

    def test_stray_close(self):
        markup = "<s>ab </class> cd</s>"
        d = diag(markup)
        assert d.kind is DiagnosticKind.STRAY_CLOSE
        assert d.position == markup.index("</class>")

    def test_nested_open(self):
        markup = '<s><class="X">ab <class="Y">cd</class></class></s>'
        d = diag(markup)
        assert d.kind is DiagnosticKind.NESTED_OPEN
        assert d.position == markup.index('<class="Y">')

    def test_nested_open_same_label(self):
        d = diag('<s><class="X">ab <class="X">.</s>')
        assert d.kind is DiagnosticKind.NESTED_OPEN

    def test_unknown_attribute(self):
        markup = '<s><label="X">ab</class></s>'
        d = diag(markup)
        assert d.kind is DiagnosticKind.UNKNOWN_ATTRIBUTE
        assert d.position == markup.index('<label="X">')

    def test_stray_angle_bracket_is_malformed(self):
        d = diag("<s>2 < 3</s>")
        assert d.kind is DiagnosticKind.MALFORMED_TAG
        assert d.position == "<s>2 < 3</s>".index("< 3")

    def test_unquoted_attribute_is_malformed(self):
        d = diag("<s><class=X>ab</class></s>")
        assert d.kind is DiagnosticKind.MALFORMED_TAG

    def test_first_error_wins(self):
        # Both a stray close and a nested open are present; the scan reports
        # the earlier one.
        markup = '<s></class><class="X">a<class="X">b</s>'
        d = diag(markup)
        assert d.kind is DiagnosticKind.STRAY_CLOSE

    def test_parse_is_total_on_junk(self):
        for junk in ["", "<s>", "<s><", '<s><class="', "<s></s></s>", "no tags at all"]:
            parse_sentence(junk)  # must not raise


class TestSegments:
    def test_split_offsets(self):
        text = "junk<s>a</s>\n<s>b</s>"
        assert split_segments(text) == [(4, "<s>a</s>\n"), (13, "<s>b</s>")]

    def test_text_before_first_open_is_no_segment(self):
        assert split_segments("nothing here") == []

    def test_document_parse_isolates_bad_segments(self):
        text = '<s>ok eins</s>\n<s>kaputt\n<s>ok <class="Medikation">zwei</class></s>'
        raw = RawSample(7, text, make_provenance(7))
        sentences, diagnostics = parse_document(raw, LABELS3)
        assert [s.text for s in sentences] == ["ok eins", "ok zwei"]
        assert [d.kind for d in diagnostics] == [DiagnosticKind.MISSING_SENTENCE_CLOSE]
        assert diagnostics[0].sample_index == 7
        assert diagnostics[0].segment_index == 1

    def test_document_ids_keep_segment_ordinals(self):
        text = "<s>a</s><s>kaputt<s>c</s>"
        raw = RawSample(3, text, make_provenance(3, backend_id="mock"))
        sentences, _ = parse_document(raw, LABELS3)
        assert [s.id for s in sentences] == ["mock:3:0", "mock:3:2"]

    def test_document_sentences_carry_provenance(self):
        raw = RawSample(0, "<s>a</s>", make_provenance(0))
        sentences, _ = parse_document(raw, LABELS3)
        assert sentences[0].provenance == raw.provenance

    def test_locality_of_malformation(self):
        good = "<s>eins</s>\n<s>zwei</s>"
        with_bad = "<s>eins</s>\n<s>kaputt\n<s>zwei</s>"
        prov = make_provenance(0)
        base, _ = parse_document(RawSample(0, good, prov))
        mixed, _ = parse_document(RawSample(0, with_bad, prov))
        assert [s.text for s in base] == [s.text for s in mixed]


class TestLenientStripping:
    def test_strips_all_tag_shapes(self):
        assert (
            strip_tags_lenient('<s>ab <class="X">cd</class> <label="y">e</s>')
            == "ab cd e"
        )

    def test_leaves_bare_angle_text(self):
        assert strip_tags_lenient("<s>2 < 3") == "2 < 3"


class TestRoundTrip:
    def test_seeded_sentences_round_trip(self):
        rng = random.Random(20240817)
        for i in range(250):
            s = random_sentence(rng, i)
            markup = encode_sentence(s)
            back = parse_sentence(markup, sentence_id=s.id)
            assert back == s, f"round-trip mismatch at sentence {i}: {markup!r}"

    def test_umlaut_offsets_survive(self):
        s = AnnotatedSentence("a", "Übergabe säurehemmend", (Span(9, 21, "Medikation"),))
        assert parse_sentence(encode_sentence(s), sentence_id="a") == s
