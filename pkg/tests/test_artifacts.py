import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from texmake.artifacts import (
    KeyNotFound,
    KeyValueTable,
    KVFormatError,
    fetch,
    format_kv,
    lint_tex_fragment,
    lint_tex_fragment_bytes,
    parse_kv,
    read_kv,
    write_kv,
)

THREE = "key,value\nlr,0.01\nnum-epochs,2\nbatch-size,64\n"

ACCURACY_TABLE = r"""\begin{tabular}{lrrrr}
\toprule
{} &      MNIST & FashionMNIST &     KMNIST &     QMNIST \\
\midrule
\textbf{ReLU } &          98.74 &   \textbf{88.92} &          93.22 &          98.62 \\
\textbf{ReLU6} &          98.69 &            88.45 &          92.89 &          98.58 \\
\textbf{SiLU } & \textbf{98.85} &            88.08 & \textbf{93.59} & \textbf{98.63} \\
\bottomrule
\end{tabular}
"""


def test_read_three_rows(tmp_path):
    p = tmp_path / "kv.csv"
    p.write_text(THREE)
    t = read_kv(p)
    assert t.keys == ["lr", "num-epochs", "batch-size"]
    assert fetch(t, "lr") == "0.01"
    assert fetch(t, "num-epochs") == "2"
    assert fetch(t, "batch-size") == "64"


def test_empty_table():
    t = parse_kv("key,value\n")
    assert t.rows == ()
    with pytest.raises(KeyNotFound):
        fetch(t, "lr")


def test_duplicate_key_line():
    with pytest.raises(KVFormatError) as ei:
        parse_kv("key,value\nlr,1\nlr,2\n")
    assert ei.value.line == 3


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("k,v\n", 1),
    ("key,value\na,b,c\n", 2),
    ("key,value\nnovalue\n", 2),
    ("key,value\n,1\n", 2),
    ('key,value\n"a",1\n', 2),
])
def test_malformed(text, line):
    with pytest.raises(KVFormatError) as ei:
        parse_kv(text)
    assert ei.value.line == line


def test_fetch_is_case_sensitive():
    with pytest.raises(KeyNotFound):
        fetch(parse_kv(THREE), "LR")


def test_write_round_trip_and_empty(tmp_path):
    t = parse_kv(THREE)
    write_kv(t, tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_bytes() == THREE.encode()
    assert read_kv(tmp_path / "a.csv") == t
    write_kv(KeyValueTable(), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_bytes() == b"key,value\n"
    assert len((tmp_path / "e.csv").read_bytes()) == 10


@pytest.mark.parametrize("row", [("a,b", "1"), ("a", "1,2"), ("a", 'q"'), ("a", "x\ny"), ("", "1")])
def test_write_rejects_bad_rows(row):
    with pytest.raises(KVFormatError):
        KeyValueTable((row,))


def test_crlf_accepted():
    assert parse_kv(THREE.replace("\n", "\r\n")) == parse_kv(THREE)


_field = st.text(st.characters(blacklist_characters=',"\r\n', blacklist_categories=("Cs",)), max_size=12)
tables = st.lists(st.tuples(_field.filter(bool), _field), max_size=20, unique_by=lambda r: r[0]).map(
    lambda rows: KeyValueTable(tuple(rows)))


@settings(max_examples=300, deadline=None)
@given(tables)
def test_round_trip_property(tmp_path_factory, t):
    p = tmp_path_factory.mktemp("kv") / "t.csv"
    write_kv(t, p)
    assert read_kv(p) == t
    assert format_kv(read_kv(p)).encode() == p.read_bytes()


def test_lint_accuracy_table_clean(tmp_path):
    p = tmp_path / "t.tex"
    p.write_text(ACCURACY_TABLE)
    assert lint_tex_fragment(p) == []


def test_lint_unclosed_environment():
    (f,) = lint_tex_fragment_bytes(rb"\begin{tabular}{lr}")
    assert f.kind == "environment"


def test_lint_unbalanced_brace():
    (f,) = lint_tex_fragment_bytes(b"{{}")
    assert f.kind == "brace"


@pytest.mark.parametrize("data,kinds", [
    (rb"\end{tabular}", ["environment"]),
    (b"}", ["brace"]),
    (rb"\begin{a}\begin{b}\end{a}", ["environment"]),
    (b"caf\xe9", ["encoding"]),
    (rb"100\% {escaped \{ brace} % comment {", []),
])
def test_lint_examples(data, kinds):
    assert [f.kind for f in lint_tex_fragment_bytes(data)] == kinds
