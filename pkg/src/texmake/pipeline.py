"""Incremental build: scan, graph, staleness, execute, commit."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import latexbuild
from .depgraph import (
    BuildGraph,
    GraphError,
    Node,
    NodeKind,
    StateError,
    StateStore,
    Step,
    build_graph,
    commit_state,
    current_digests,
    explain_staleness,
    invalidate,
    load_state,
    plan,
    save_state,
    scan_latex_dependencies,
)
from .executor import CONTAINER_WORKDIR, ExecutorError, ImageBuildSpec, Mount, RunSpec
from .manifest import BuildMode, ProjectManifest, validate_manifest

log = logging.getLogger(__name__)


class ConfigError(RuntimeError):
    """Project cannot be built as described (exit status 2)."""


class StepFailed(RuntimeError):
    """A build step ran and failed (exit status 1)."""

    def __init__(self, step: Step, message: str, log_path: Path | None = None):
        self.step = step
        self.log_path = log_path
        suffix = f" (log: {log_path})" if log_path else ""
        super().__init__(f"{step.value} failed: {message}{suffix}")


@dataclass
class BuildOutcome:
    executed: list[Step] = field(default_factory=list)
    skipped: list[Step] = field(default_factory=list)
    reasons: dict[Step, list[str]] = field(default_factory=dict)


def load_graph(m: ProjectManifest) -> BuildGraph:
    violations = validate_manifest(m)
    if violations:
        raise ConfigError("invalid project:\n" + "\n".join(f"  {v}" for v in violations))
    tex = m.path(m.latex_main).read_text(encoding="utf-8", errors="replace")
    try:
        return build_graph(m, scan_latex_dependencies(tex, m.artifacts_dir))
    except GraphError as exc:
        raise ConfigError(str(exc)) from None


def _load_state(m: ProjectManifest):
    try:
        return load_state(m.state_path)
    except StateError as exc:
        log.warning("ignoring unreadable build state %s: %s", m.state_path, exc)
        return StateStore()


def status(m: ProjectManifest, mode: BuildMode, force: bool = False) -> dict[Step, list[str]]:
    """Staleness reasons per step; touches nothing on disk."""
    g = load_graph(m)
    return explain_staleness(g, _load_state(m), mode, force)


def run_build(
    m: ProjectManifest,
    mode: BuildMode,
    backend,
    *,
    force: bool = False,
    recipe: latexbuild.CompileRecipe | None = None,
) -> BuildOutcome:
    g = load_graph(m)
    store = _load_state(m)

    def present(node: Node) -> bool:
        return backend.image_exists(node.ref)

    reasons = explain_staleness(g, store, mode, force, present=present)
    todo = plan(g, [s for s, why in reasons.items() if why])
    outcome = BuildOutcome(reasons=reasons)
    outcome.skipped = [s for s in g.step_order() if s not in todo]
    if not todo:
        return outcome

    logs = m.artifacts_path / "logs"
    for step in todo:
        log.info("%s: %s", step.value, "; ".join(reasons[step]))
        save_state(invalidate(store, step, g), m.state_path)
        _execute(step, m, g, mode, backend, recipe, logs)
        commit_state(store, [step], g, mode, path=m.state_path)
        outcome.executed.append(step)
    return outcome


def _execute(step: Step, m: ProjectManifest, g: BuildGraph, mode: BuildMode, backend, recipe, logs: Path) -> None:
    log_path = logs / f"{step.value}.log"
    try:
        if step is Step.BUILD_IMAGE:
            spec = ImageBuildSpec(m.root, m.path(m.containerfile), m.image_tag)
            result = backend.build_image(spec, log_path=log_path)
            if not result.ok:
                raise StepFailed(step, f"image build exited with status {result.exit_code}", result.log_path)
        elif step is Step.RUN_RESULTS:
            sources = _source_digests(g)
            spec = RunSpec(
                image=m.image_tag,
                command=m.results_command,
                env=mode.env,
                mounts=(Mount(m.root, CONTAINER_WORKDIR, True),),
                workdir=CONTAINER_WORKDIR,
            )
            result = backend.run(spec, log_path=log_path)
            if not result.ok:
                raise StepFailed(step, f"results program exited with status {result.exit_code}", result.log_path)
            changed = [n.ref for n, d in _source_digests(g).items() if sources.get(n) != d]
            if changed:
                log.warning("results program modified tracked sources: %s", ", ".join(sorted(changed)))
            missing = [n.ref for n in sorted(g.steps[step].outputs) if not (m.root / n.ref).is_file()]
            if missing:
                raise StepFailed(step, f"results program did not produce {', '.join(missing)}", result.log_path)
        else:
            latexbuild.compile_document(m, backend, recipe or latexbuild.CompileRecipe.for_manifest(m), log_dir=logs)
    except latexbuild.LatexError as exc:
        raise StepFailed(step, str(exc), exc.log_path) from None
    except ExecutorError as exc:
        raise StepFailed(step, str(exc)) from None


def _source_digests(g: BuildGraph) -> dict[Node, str | None]:
    digests = current_digests(g)
    return {n: d for n, d in digests.items() if n.kind is NodeKind.SOURCE}
