import hashlib
import shutil
import subprocess

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from texmake.depgraph import (
    GraphError,
    Node,
    NodeKind,
    StateError,
    StateStore,
    Step,
    build_graph,
    commit_state,
    compute_digest,
    load_state,
    plan,
    save_state,
    scan_latex_dependencies,
    stale_steps,
    strip_comment,
)
from texmake.manifest import BuildMode, ProjectManifest, find_manifest
from texmake.scaffold import init_project

KV = "artifacts/keys-values.csv"


def test_scan_dtlloaddb():
    assert scan_latex_dependencies(r"\DTLloaddb{keys-values}{artifacts/keys-values.csv}", "artifacts") == [KV]


def test_scan_ignores_comments():
    assert scan_latex_dependencies(r"% \includegraphics{artifacts/x.png}", "artifacts") == []


def test_scan_dedups_in_order():
    tex = "\\subfloat{\\includegraphics[width=0.5\\columnwidth]{artifacts/loss.png}}\n" * 2
    assert scan_latex_dependencies(tex, "artifacts") == ["artifacts/loss.png"]


def test_scan_kinds_and_extensions():
    tex = "\n".join([
        r"\input{artifacts/table}",
        r"\include{chapter}",
        r"\bibliography{artifacts/refs, other}",
        r"\addbibresource{artifacts/x.bib}",
        r"\includegraphics*[h]{artifacts/a.pdf} 50\% \input{artifacts/b.tex}",
        r"\inputencoding{artifacts/no}",
        r"\input{artifacts/broken",
    ])
    assert scan_latex_dependencies(tex, "artifacts") == [
        "artifacts/table.tex", "artifacts/refs.bib", "artifacts/x.bib", "artifacts/a.pdf", "artifacts/b.tex"]


@pytest.mark.parametrize("line,out", [
    ("a % b", "a "),
    (r"50\% done % note", r"50\% done "),
    (r"a \\% b", "a \\\\"),
    ("none", "none"),
])
def test_strip_comment(line, out):
    assert strip_comment(line) == out


@pytest.fixture
def scaffold(tmp_path):
    init_project(tmp_path / "p")
    return find_manifest(tmp_path / "p")


def test_scan_scaffold(scaffold):
    tex = (scaffold.root / "ms.tex").read_text()
    assert scan_latex_dependencies(tex, "artifacts") == [KV, "artifacts/metrics.tex"]


def test_keys_values_only_graph_has_eight_nodes(scaffold):
    g = build_graph(scaffold, [KV])
    refs = sorted(n.ref for n in g.nodes)
    assert len(g.nodes) == 8
    assert refs == sorted(["ms.tex", "ms.bib", "main.py", "Containerfile", "requirements.txt",
                           scaffold.image_tag, KV, "artifacts/ms.pdf"])
    assert g.step_order() == [Step.BUILD_IMAGE, Step.RUN_RESULTS, Step.COMPILE_LATEX]
    assert Node(NodeKind.DOCUMENT_PDF, "artifacts/ms.pdf") in g.nodes


def test_empty_deps_disconnects_results(scaffold):
    g = build_graph(scaffold, [])
    assert g.prerequisites(Step.COMPILE_LATEX) == set()
    assert g.prerequisites(Step.RUN_RESULTS) == {Step.BUILD_IMAGE}


@pytest.mark.parametrize("dep", ["ms.tex", "artifacts/ms.pdf", "elsewhere/x.csv", "../artifacts/x"])
def test_bad_dependencies_rejected(scaffold, dep):
    with pytest.raises(GraphError):
        build_graph(scaffold, [dep])


def test_main_inside_artifacts_is_a_cycle(tmp_path):
    m = ProjectManifest(root=tmp_path, latex_main="artifacts/ms.tex")
    with pytest.raises(GraphError, match="cycle"):
        build_graph(m, ["artifacts/ms.tex"])


def _oracle_sha256(path):
    tool = shutil.which("sha256sum")
    if tool:
        return subprocess.run([tool, str(path)], capture_output=True, text=True, check=True).stdout.split()[0]
    return hashlib.new("sha256", path.read_bytes()).hexdigest()


@pytest.mark.parametrize("content,expected", [
    (b"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
    (b"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
])
def test_digest_known_values(tmp_path, content, expected):
    p = tmp_path / "f"
    p.write_bytes(content)
    assert compute_digest(p) == expected == _oracle_sha256(p)
    assert compute_digest(p) == compute_digest(p)


@settings(max_examples=50, deadline=None)
@given(st.binary(max_size=200_000))
def test_digest_matches_oracle(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("d") / "f"
    p.write_bytes(data)
    assert compute_digest(p) == _oracle_sha256(p)


def _quiescent(m):
    """Pretend a full build happened: write artifacts, commit every step."""
    g = build_graph(m, [KV])
    m.artifacts_path.mkdir()
    (m.root / KV).write_text("key,value\n")
    (m.root / "artifacts/ms.pdf").write_bytes(b"%PDF-1.5\n")
    s = commit_state(StateStore(), list(Step), g, BuildMode.DRAFT)
    return g, s


def test_fresh_store_is_quiescent(scaffold):
    g, s = _quiescent(scaffold)
    assert stale_steps(g, s, BuildMode.DRAFT) == set()
    assert s.mode is BuildMode.DRAFT


def test_edit_tex_only_compiles(scaffold):
    g, s = _quiescent(scaffold)
    (scaffold.root / "ms.tex").write_text("changed")
    assert stale_steps(g, s, BuildMode.DRAFT) == {Step.COMPILE_LATEX}


def test_edit_main_propagates(scaffold):
    g, s = _quiescent(scaffold)
    (scaffold.root / "main.py").write_text("changed")
    assert stale_steps(g, s, BuildMode.DRAFT) == {Step.RUN_RESULTS, Step.COMPILE_LATEX}


def test_edit_requirements_rebuilds_all(scaffold):
    g, s = _quiescent(scaffold)
    (scaffold.root / "requirements.txt").write_text("numpy\n")
    assert stale_steps(g, s, BuildMode.DRAFT) == set(Step)


def test_mode_switch_and_force(scaffold):
    g, s = _quiescent(scaffold)
    assert stale_steps(g, s, BuildMode.FULL) == {Step.RUN_RESULTS, Step.COMPILE_LATEX}
    assert stale_steps(g, s, BuildMode.DRAFT, force=True) == set(Step)


def test_missing_output_is_stale(scaffold):
    g, s = _quiescent(scaffold)
    (scaffold.root / "artifacts/ms.pdf").unlink()
    assert stale_steps(g, s, BuildMode.DRAFT) == {Step.COMPILE_LATEX}


def test_image_absent_from_runtime(scaffold):
    g, s = _quiescent(scaffold)
    assert stale_steps(g, s, BuildMode.DRAFT, present=lambda n: False) == set(Step)


@pytest.mark.parametrize("stale,order", [
    ({Step.COMPILE_LATEX}, [Step.COMPILE_LATEX]),
    (set(Step), [Step.BUILD_IMAGE, Step.RUN_RESULTS, Step.COMPILE_LATEX]),
    (set(), []),
])
def test_plan(scaffold, stale, order):
    assert plan(build_graph(scaffold, [KV]), stale) == order


def test_state_round_trip_and_format(tmp_path, scaffold):
    g, s = _quiescent(scaffold)
    path = tmp_path / "state"
    save_state(s, path)
    text = path.read_bytes()
    assert b"\r" not in text
    lines = text.decode().splitlines()
    assert lines == sorted(lines)
    assert "mode draft" in lines
    assert load_state(path) == s
    assert load_state(tmp_path / "missing") == StateStore()


def test_malformed_state_rejected():
    with pytest.raises(StateError):
        StateStore.from_text("garbage line\n")
    with pytest.raises(StateError):
        StateStore.from_text("mode turbo\n")


def test_failed_save_keeps_old_store(tmp_path, monkeypatch):
    path = tmp_path / "state"
    old = StateStore({"source:a": "0" * 64}, BuildMode.DRAFT)
    save_state(old, path)

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr("texmake.depgraph.os.replace", boom)
    with pytest.raises(OSError):
        save_state(StateStore({"source:b": "1" * 64}), path)
    assert load_state(path) == old
    assert [p.name for p in tmp_path.iterdir()] == ["state"]


_seg = st.text(alphabet="abcdefghij-_", min_size=1, max_size=6)


@settings(max_examples=200, deadline=None)
@given(st.lists(_seg, max_size=8), st.lists(st.sampled_from(["input", "includegraphics", "DTLloaddb"]), max_size=8))
def test_graph_is_acyclic_for_any_artifact_set(tmp_path_factory, names, cmds):
    root = tmp_path_factory.mktemp("g")
    m = ProjectManifest(root=root)
    tex = "\n".join(
        (rf"\DTLloaddb{{db}}{{artifacts/{n}.csv}}" if c == "DTLloaddb" else rf"\{c}{{artifacts/{n}.x}}")
        for n, c in zip(names, cmds))
    deps = scan_latex_dependencies(tex, "artifacts")
    g = build_graph(m, deps)
    order = g.step_order()
    assert order == [Step.BUILD_IMAGE, Step.RUN_RESULTS, Step.COMPILE_LATEX] or deps == []
    for a, b in g.edges:
        assert order.index(g.producer(b)) >= (order.index(g.producer(a)) if g.producer(a) else -1)
