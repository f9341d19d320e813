import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pdfgen import build_pdf, corpus, fuzz, minimal, with_info

from texmake.pdfparse import (
    MAX_DEPTH,
    Name,
    NotAPdf,
    PdfString,
    PdfSyntaxError,
    Ref,
    Stream,
    parse_object_bytes,
    parse_pdf_objects,
    parse_value,
)

CORPUS = corpus()


def test_corpus_size():
    assert len(CORPUS) >= 10


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_corpus_parses_cleanly_with_span_fidelity(name):
    data = CORPUS[name]
    parsed = parse_pdf_objects(data)
    assert parsed.problems == []
    assert parsed.objects and parsed.trailers
    for obj in parsed.objects:
        a, b = obj.span
        assert data[a:b].rstrip().endswith(b"endobj")
        again = parse_object_bytes(data[a:b])
        assert (again.number, again.generation, again.body) == (obj.number, obj.generation, obj.body)


def test_minimal_two_objects_one_trailer():
    p = parse_pdf_objects(minimal())
    assert [o.key for o in p.objects] == [(1, 0), (2, 0)]
    assert len(p.trailers) == 1
    assert p.trailers[0]["Root"] == Ref(1, 0)


def test_trailer_id_pair():
    (t,) = parse_pdf_objects(with_info(trailer_id=(b"aa", b"bb"))).trailers
    assert t["ID"] == [PdfString(b"\xaa"), PdfString(b"\xbb")]


def test_not_a_pdf():
    with pytest.raises(NotAPdf):
        parse_pdf_objects(b"hello")


def test_literal_strings_decoded():
    (arr,) = [o.body for o in parse_pdf_objects(CORPUS["literal_strings"]).objects if o.number == 3]
    assert arr == [b"plain", b"nested (parens) ok", b"esc \n\r\t\b\f ( ) \\", b"octal AB\x07", b"linecontinued", b""]


def test_hex_strings_decoded():
    (arr,) = [o.body for o in parse_pdf_objects(CORPUS["hex_strings"]).objects if o.number == 3]
    assert arr == [b"Hello", b"Hello", b"\xab\xc0", b""]


def test_names_and_numbers():
    (d,) = [o.body for o in parse_pdf_objects(CORPUS["names_numbers"]).objects if o.number == 3]
    assert d["A B"] == 1 and d["C"] == -2.5 and d["D"] == 0.5 and d["E"] == 7 and d["F"] == 4.0
    assert d["G"] is True and d["H"] is False and d["I"] is None
    assert d["J"] == [[1, [2, [3]]], {"K": Name("L")}]
    assert d["M"] == Ref(3, 0)
    assert isinstance(d["J"][1]["K"], Name)


def test_streams():
    objs = parse_pdf_objects(CORPUS["flate_stream"]).by_key()
    s = objs[(3, 0)].body
    assert isinstance(s, Stream) and s.data is None
    assert zlib.decompress(s.raw).startswith(b"BT /F1 24 Tf")
    ind = parse_pdf_objects(CORPUS["indirect_length"]).by_key()[(3, 0)].body
    assert ind.raw == b"0 0 m 100 100 l S"
    binary = parse_pdf_objects(CORPUS["binary_stream"]).by_key()[(3, 0)].body
    assert binary.raw == bytes(range(256)) + b"endobj 9 0 obj"


def test_xref_stream_is_a_trailer():
    (t,) = parse_pdf_objects(CORPUS["xref_stream"]).trailers
    assert t["Type"] == "XRef" and t["ID"] == [b"\x01", b"\x02"]


def test_incremental_update_last_wins():
    p = parse_pdf_objects(CORPUS["incremental_update"])
    assert len(p.trailers) == 2
    assert p.by_key()[(1, 0)].body["Lang"] == b"en"


def test_missing_endobj_recovers():
    data = b"%PDF-1.4\n1 0 obj\n<< /A 1 >>\n2 0 obj\n<< /B 2 >>\nendobj\n"
    p = parse_pdf_objects(data)
    assert [o.key for o in p.objects] == [(1, 0), (2, 0)]
    assert any("missing endobj" in pr.message for pr in p.problems)


def test_depth_limit():
    with pytest.raises(PdfSyntaxError):
        parse_value(b"[" * (MAX_DEPTH + 5))
    p = parse_pdf_objects(b"%PDF-1.4\n1 0 obj\n" + b"[" * 100_000 + b"\nendobj\n")
    assert p.objects == [] and p.problems


@pytest.mark.parametrize("src,val", [
    (b"<< >>", {}),
    (b"[1 0 R 2]", [Ref(1, 0), 2]),
    (b"[1 2]", [1, 2]),
    (b"(a\\\r\nb)", b"ab"),
    (b"(\\0053)", b"\x053"),
    (b"/#41#42", "AB"),
    (b"-.002", -0.002),
])
def test_values(src, val):
    assert parse_value(src) == val


def test_fuzz_small():
    assert fuzz(500, seed=1) == 500


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=400))
def test_arbitrary_bytes_after_header(tail):
    parse_pdf_objects(b"%PDF-" + tail)


def test_build_pdf_crlf_offsets():
    data = build_pdf([b"<< /A 1 >>"], eol=b"\r\n")
    assert parse_pdf_objects(data).objects[0].span[0] == data.index(b"1 0 obj")
