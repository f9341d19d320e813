"""Dependency graph, content-digest staleness and the persisted build state."""

from __future__ import annotations

import enum
import hashlib
import os
import re
import tempfile
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from pathlib import Path

from .manifest import BuildMode, ProjectManifest

_HEX64 = re.compile(r"[0-9a-f]{64}")


class GraphError(ValueError):
    pass


class StateError(ValueError):
    pass


class NodeKind(str, enum.Enum):
    SOURCE = "source"
    IMAGE = "image"
    RESULTS_ARTIFACT = "results_artifact"
    DOCUMENT_PDF = "document_pdf"


_KIND_ORDER = {k: i for i, k in enumerate(NodeKind)}


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    ref: str

    @property
    def is_file(self) -> bool:
        return self.kind is not NodeKind.IMAGE

    @property
    def key(self) -> str:
        return f"{self.kind.value}:{self.ref}"

    def __lt__(self, other: Node) -> bool:
        return (_KIND_ORDER[self.kind], self.ref) < (_KIND_ORDER[other.kind], other.ref)

    def __str__(self) -> str:
        return self.ref


class Step(str, enum.Enum):
    BUILD_IMAGE = "BuildImage"
    RUN_RESULTS = "RunResults"
    COMPILE_LATEX = "CompileLatex"


@dataclass(frozen=True)
class StepSpec:
    step: Step
    inputs: frozenset[Node]
    outputs: frozenset[Node]


@dataclass(frozen=True)
class BuildGraph:
    nodes: frozenset[Node]
    edges: frozenset[tuple[Node, Node]]
    steps: dict[Step, StepSpec]
    root: Path

    def producer(self, node: Node) -> Step | None:
        for spec in self.steps.values():
            if node in spec.outputs:
                return spec.step
        return None

    def prerequisites(self, step: Step) -> set[Step]:
        out = set()
        for node in self.steps[step].inputs:
            p = self.producer(node)
            if p is not None and p is not step:
                out.add(p)
        return out

    def step_order(self) -> list[Step]:
        ts = TopologicalSorter({s: self.prerequisites(s) for s in self.steps})
        try:
            order = list(ts.static_order())
        except CycleError as exc:
            raise GraphError(f"dependency cycle between steps: {exc.args[1]}") from None
        # ties broken by the canonical pipeline order
        rank = {s: i for i, s in enumerate(Step)}
        return sorted(order, key=lambda s: (_depth(self, s), rank[s]))


def _depth(g: BuildGraph, step: Step) -> int:
    pre = g.prerequisites(step)
    return 0 if not pre else 1 + max(_depth(g, p) for p in pre)


# ---------------------------------------------------------------------------
# LaTeX dependency scanning

_CMD = re.compile(r"\\(DTLloaddb|includegraphics|input|include|addbibresource|bibliography)(?![A-Za-z@])\*?")
_PATH_ARG_INDEX = {"DTLloaddb": 1}


def strip_comment(line: str) -> str:
    """Drop everything after the first unescaped ``%``."""
    i = 0
    while True:
        i = line.find("%", i)
        if i < 0:
            return line
        backslashes = 0
        j = i - 1
        while j >= 0 and line[j] == "\\":
            backslashes += 1
            j -= 1
        if backslashes % 2 == 0:
            return line[:i]
        i += 1


def _skip_ws(s: str, i: int) -> int:
    while i < len(s) and s[i] in " \t":
        i += 1
    return i


def _read_group(s: str, i: int, open_ch: str, close_ch: str) -> tuple[str, int] | None:
    """Read a balanced group starting at ``s[i] == open_ch``; None if unbalanced."""
    depth = 0
    start = i + 1
    while i < len(s):
        c = s[i]
        if c == "\\":
            i += 2
            continue
        if c == "{" and open_ch != "{":
            inner = _read_group(s, i, "{", "}")
            if inner is None:
                return None
            i = inner[1]
            continue
        if c == open_ch:
            depth += 1
        elif c == close_ch:
            depth -= 1
            if depth == 0:
                return s[start:i], i + 1
        i += 1
    return None


def scan_latex_dependencies(tex_text: str, artifacts_dir: str) -> list[str]:
    prefix = artifacts_dir.rstrip("/") + "/"
    found: dict[str, None] = {}
    for raw_line in tex_text.splitlines():
        line = strip_comment(raw_line)
        pos = 0
        while True:
            m = _CMD.search(line, pos)
            if m is None:
                break
            cmd = m.group(1)
            i = m.end()
            args: list[str] = []
            broken = False
            wanted = _PATH_ARG_INDEX.get(cmd, 0) + 1
            while len(args) < wanted:
                i = _skip_ws(line, i)
                if i < len(line) and line[i] == "[":
                    grp = _read_group(line, i, "[", "]")
                elif i < len(line) and line[i] == "{":
                    grp = _read_group(line, i, "{", "}")
                    if grp is not None:
                        args.append(grp[0])
                else:
                    break
                if grp is None:
                    broken = True
                    break
                i = grp[1]
            if broken:
                break
            pos = m.end()
            if len(args) < wanted:
                continue
            for path in _paths_for(cmd, args[-1].strip()):
                if path.startswith(prefix):
                    found.setdefault(path)
    return list(found)


def _paths_for(cmd: str, arg: str) -> list[str]:
    if cmd == "bibliography":
        out = []
        for part in arg.split(","):
            part = part.strip()
            if part:
                out.append(part if Path(part).suffix else part + ".bib")
        return out
    if cmd in ("input", "include") and not Path(arg).suffix:
        return [arg + ".tex"]
    return [arg]


# ---------------------------------------------------------------------------
# graph construction


def build_graph(m: ProjectManifest, latex_deps: Iterable[str]) -> BuildGraph:
    prefix = m.artifacts_dir + "/"
    deps = list(dict.fromkeys(latex_deps))
    for d in deps:
        if not d.startswith(prefix):
            raise GraphError(f"latex dependency {d!r} is not under {prefix}")

    def src(rel: str) -> Node:
        return Node(NodeKind.SOURCE, rel)

    source_refs = {m.latex_main, m.containerfile, *m.results_sources, *m.container_context_extras}
    if m.bibliography:
        source_refs.add(m.bibliography)
    pdf = Node(NodeKind.DOCUMENT_PDF, m.pdf_relpath)
    for d in deps:
        if d == m.latex_main or d == pdf.ref:
            raise GraphError(f"{d!r} would be both an input and an output of CompileLatex (cycle)")
        if d in source_refs:
            raise GraphError(f"{d!r} is a source file and cannot be produced by RunResults")

    image = Node(NodeKind.IMAGE, m.image_tag)
    results = frozenset(Node(NodeKind.RESULTS_ARTIFACT, d) for d in deps)

    latex_inputs = {src(m.latex_main)}
    if m.bibliography and m.path(m.bibliography).is_file():
        latex_inputs.add(src(m.bibliography))
    latex_inputs |= results

    steps = {
        Step.BUILD_IMAGE: StepSpec(
            Step.BUILD_IMAGE,
            frozenset({src(m.containerfile), *(src(p) for p in m.container_context_extras)}),
            frozenset({image}),
        ),
        Step.RUN_RESULTS: StepSpec(
            Step.RUN_RESULTS,
            frozenset({image, *(src(p) for p in m.results_sources)}),
            results,
        ),
        Step.COMPILE_LATEX: StepSpec(Step.COMPILE_LATEX, frozenset(latex_inputs), frozenset({pdf})),
    }
    nodes: set[Node] = set()
    edges: set[tuple[Node, Node]] = set()
    for spec in steps.values():
        nodes |= spec.inputs | spec.outputs
        edges |= {(i, o) for i in spec.inputs for o in spec.outputs}

    g = BuildGraph(frozenset(nodes), frozenset(edges), steps, m.root)
    _check_acyclic(g)
    return g


def _check_acyclic(g: BuildGraph) -> None:
    preds: dict[Node, set[Node]] = {n: set() for n in g.nodes}
    for a, b in g.edges:
        preds[b].add(a)
    try:
        list(TopologicalSorter(preds).static_order())
    except CycleError as exc:
        raise GraphError(f"dependency cycle: {exc.args[1]}") from None


# ---------------------------------------------------------------------------
# digests and state


def compute_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _try_digest(path: Path) -> str | None:
    try:
        return compute_digest(path)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError):
        return None


def image_identity(g: BuildGraph, digests: dict[Node, str | None]) -> str:
    """Digest standing in for the image: a hash over its build inputs."""
    h = hashlib.sha256()
    for node in sorted(g.steps[Step.BUILD_IMAGE].inputs):
        h.update(f"{node.key}\0{digests.get(node) or '-'}\n".encode())
    return h.hexdigest()


@dataclass
class StateStore:
    entries: dict[str, str] = field(default_factory=dict)
    mode: BuildMode | None = None

    def get(self, node: Node) -> str | None:
        return self.entries.get(node.key)

    def to_text(self) -> str:
        lines = [f"{digest} {key}" for key, digest in self.entries.items()]
        if self.mode is not None:
            lines.append(f"mode {self.mode.value}")
        lines.sort()
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_text(cls, text: str) -> StateStore:
        store = cls()
        for lineno, line in enumerate(text.split("\n"), start=1):
            if not line:
                continue
            head, sep, rest = line.partition(" ")
            if head == "mode" and sep:
                try:
                    store.mode = BuildMode(rest)
                except ValueError:
                    raise StateError(f"line {lineno}: unknown mode {rest!r}") from None
            elif _HEX64.fullmatch(head) and ":" in rest:
                store.entries[rest] = head
            else:
                raise StateError(f"line {lineno}: malformed state entry {line!r}")
        return store


def load_state(path: str | Path) -> StateStore:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        return StateStore()
    return StateStore.from_text(text)


def save_state(store: StateStore, path: str | Path) -> None:
    """Write-temp-then-rename so readers see either the old or the new store."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".build-state.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(store.to_text())
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def current_digests(g: BuildGraph) -> dict[Node, str | None]:
    digests: dict[Node, str | None] = {}
    for node in g.nodes:
        if node.is_file:
            digests[node] = _try_digest(g.root / node.ref)
    for node in g.nodes:
        if not node.is_file:
            digests[node] = image_identity(g, digests)
    return digests


# ---------------------------------------------------------------------------
# staleness and planning


def explain_staleness(
    g: BuildGraph,
    s: StateStore,
    mode: BuildMode,
    force: bool = False,
    *,
    present: Callable[[Node], bool] | None = None,
    digests: dict[Node, str | None] | None = None,
) -> dict[Step, list[str]]:
    """Reasons each step must run; a step with no reasons is fresh.

    *present* decides whether a non-file output (the image) exists; by
    default an image counts as present once the store has recorded it.
    """
    if digests is None:
        digests = current_digests(g)
    reasons: dict[Step, list[str]] = {}
    for step in g.step_order():
        spec = g.steps[step]
        why: list[str] = []
        if force:
            why.append("forced")
        for node in sorted(spec.inputs):
            if digests[node] is None:
                why.append(f"{node} missing")
            elif s.get(node) is None:
                why.append(f"{node} not recorded")
            elif digests[node] != s.get(node):
                why.append(f"{node} changed")
        for node in sorted(spec.outputs):
            if node.is_file:
                if digests[node] is None:
                    why.append(f"{node} missing")
                elif s.get(node) is None:
                    why.append(f"{node} not recorded")
            elif s.get(node) is None or (present is not None and not present(node)):
                why.append(f"{node} not built")
        if step is Step.RUN_RESULTS and s.mode is not mode:
            why.append(f"mode {s.mode.value if s.mode else 'none'} -> {mode.value}")
        for pre in sorted(g.prerequisites(step), key=list(Step).index):
            if reasons.get(pre):
                why.append(f"prerequisite {pre.value} stale")
        reasons[step] = why
    return reasons


def stale_steps(
    g: BuildGraph,
    s: StateStore,
    mode: BuildMode,
    force: bool = False,
    *,
    present: Callable[[Node], bool] | None = None,
) -> set[Step]:
    return {step for step, why in explain_staleness(g, s, mode, force, present=present).items() if why}


def plan(g: BuildGraph, stale: Iterable[Step]) -> list[Step]:
    stale = set(stale)
    unknown = stale - set(g.steps)
    if unknown:
        raise GraphError(f"steps not in graph: {sorted(x.value for x in unknown)}")
    return [s for s in g.step_order() if s in stale]


def invalidate(s: StateStore, step: Step, g: BuildGraph) -> StateStore:
    """Forget a step's outputs so an interrupted step is stale next time."""
    for node in g.steps[step].outputs:
        s.entries.pop(node.key, None)
    return s


def commit_state(
    s: StateStore,
    executed: Iterable[Step],
    g: BuildGraph,
    mode: BuildMode,
    *,
    path: str | Path | None = None,
) -> StateStore:
    """Record input/output digests of executed steps; persist when *path* is given."""
    digests = current_digests(g)
    for step in executed:
        spec = g.steps[step]
        for node in spec.inputs | spec.outputs:
            d = digests[node]
            if d is None:
                s.entries.pop(node.key, None)
            else:
                s.entries[node.key] = d
        if step is Step.RUN_RESULTS:
            s.mode = mode
    if path is not None:
        save_state(s, path)
    return s
