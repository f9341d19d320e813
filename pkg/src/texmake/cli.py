"""Command line: build (default), clean, verify, graph, status, init."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys

from . import __version__
from .depgraph import NodeKind, Step
from .executor import ExecutorError, LocalBackend, containerfile_cmd, make_backend
from .latexbuild import CompileRecipe
from .lock import LockHeld, build_lock
from .manifest import BuildMode, ManifestError, ProjectManifest, find_manifest
from .pdfparse import PdfError
from .pipeline import ConfigError, StepFailed, load_graph, run_build, status
from .reprocheck import verify_reproducibility
from .scaffold import init_project

log = logging.getLogger("texmake")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _add_project(p: argparse.ArgumentParser) -> None:
    p.add_argument("--project", "-C", default=".", metavar="DIR", help="project directory (default: current directory)")


def _add_build_flags(p: argparse.ArgumentParser) -> None:
    _add_project(p)
    p.add_argument("--full", action="store_true", help="full (slow) results; same as FULL=1 in the environment")
    p.add_argument("--force", action="store_true", help="run every step even if nothing changed")
    p.add_argument("--backend", choices=("auto", "docker", "podman", "local"), default="auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texmake", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("build", parents=[common], help="regenerate what changed (default command)")
    _add_build_flags(p)

    p = sub.add_parser("clean", parents=[common], help="remove the artifacts directory")
    _add_project(p)

    p = sub.add_parser("verify", parents=[common], help="build twice and compare the PDFs byte by byte")
    _add_build_flags(p)
    p.add_argument("--no-repro-flags", action="store_true", help="drop the deterministic-output settings (diagnostics)")

    p = sub.add_parser("graph", parents=[common], help="print the dependency graph in DOT format")
    _add_project(p)

    p = sub.add_parser("status", parents=[common], help="show which steps are stale and why")
    _add_project(p)
    p.add_argument("--full", action="store_true")

    p = sub.add_parser("init", parents=[common], help="create a new document project")
    p.add_argument("directory")
    p.add_argument("--name", help="document title")
    return parser


def _mode(args) -> BuildMode:
    return BuildMode.FULL if args.full or os.environ.get("FULL") == "1" else BuildMode.DRAFT


def _backend(args, m: ProjectManifest, injected):
    if injected is not None:
        return injected
    if args.backend == "local":
        return LocalBackend(lambda tag: containerfile_cmd(m.path(m.containerfile)) if tag == m.image_tag else ())
    return make_backend(args.backend)


def cmd_build(args, backend=None) -> int:
    m = find_manifest(args.project)
    mode = _mode(args)
    be = _backend(args, m, backend)
    with build_lock(m.artifacts_path / ".lock"):
        outcome = run_build(m, mode, be, force=args.force)
    if not outcome.executed:
        log.info("nothing to do")
    else:
        log.info("executed: %s", ", ".join(s.value for s in outcome.executed))
    if outcome.skipped:
        log.info("skipped (fresh): %s", ", ".join(s.value for s in outcome.skipped))
    return EXIT_OK


def cmd_clean(args) -> int:
    m = find_manifest(args.project)
    target = m.artifacts_path
    if not target.exists():
        return EXIT_OK
    if target.is_symlink() or not target.is_dir():
        target.unlink()
        return EXIT_OK
    with build_lock(target / ".lock"):
        shutil.rmtree(target)
    log.info("removed %s", target)
    return EXIT_OK


def cmd_verify(args, backend=None) -> int:
    try:
        m = find_manifest(args.project)
        be = _backend(args, m, backend)
        recipe = CompileRecipe.for_manifest(m)
        if args.no_repro_flags:
            recipe = recipe.without_repro_flags()
        with build_lock(m.artifacts_path / ".lock"):
            report = verify_reproducibility(m, _mode(args), be, recipe=recipe)
    except (StepFailed, ConfigError, ManifestError, ExecutorError, PdfError, LockHeld, OSError) as exc:
        log.error("verify: %s", exc)
        return EXIT_USAGE
    log.info("%s", report.summary())
    print(json.dumps(report.to_json(), indent=2))
    return EXIT_OK if report.identical else EXIT_FAIL


_SHAPES = {
    NodeKind.SOURCE: "note",
    NodeKind.IMAGE: "box3d",
    NodeKind.RESULTS_ARTIFACT: "box",
    NodeKind.DOCUMENT_PDF: "doubleoctagon",
}


def render_dot(g) -> str:
    lines = ["digraph build {", "  rankdir=LR;"]
    for node in sorted(g.nodes):
        lines.append(f'  "{node.key}" [label="{node.ref}", shape={_SHAPES[node.kind]}];')
    for step in g.step_order():
        spec = g.steps[step]
        for a in sorted(spec.inputs):
            for b in sorted(spec.outputs):
                lines.append(f'  "{a.key}" -> "{b.key}" [label="{step.value}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_graph(args) -> int:
    g = load_graph(find_manifest(args.project))
    sys.stdout.write(render_dot(g))
    return EXIT_OK


def cmd_status(args) -> int:
    m = find_manifest(args.project)
    reasons = status(m, _mode(args))
    for step in Step:
        if step not in reasons:
            continue
        why = reasons[step]
        state = "stale" if why else "fresh"
        suffix = f"  ({'; '.join(why)})" if why else ""
        print(f"{step.value:<13} {state}{suffix}")
    return EXIT_OK


def cmd_init(args) -> int:
    created = init_project(args.directory, args.name)
    for p in created:
        log.info("created %s", p)
    return EXIT_OK


def main(argv: list[str] | None = None, *, backend=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # bare `texmake` (or only build flags) means build, like bare `make`
    if not argv or (argv[0].startswith("-") and argv[0] not in ("-h", "--help", "--version")):
        argv.insert(0, "build")
    args = build_parser().parse_args(argv)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("texmake: %(message)s"))
    root = logging.getLogger("texmake")
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return _dispatch(args, backend)
    finally:
        root.removeHandler(handler)


def _dispatch(args, backend) -> int:
    try:
        if args.command == "build":
            return cmd_build(args, backend)
        if args.command == "verify":
            return cmd_verify(args, backend)
        return {"clean": cmd_clean, "graph": cmd_graph, "status": cmd_status, "init": cmd_init}[args.command](args)
    except StepFailed as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    except (ManifestError, ConfigError, ExecutorError, LockHeld, FileExistsError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
