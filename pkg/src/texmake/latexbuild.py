"""Deterministic multi-pass LaTeX compilation."""

from __future__ import annotations

import logging
import re
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

from .depgraph import compute_digest, strip_comment
from .executor import CONTAINER_WORKDIR, Mount, RunSpec
from .manifest import ProjectManifest

log = logging.getLogger(__name__)

REPRO_PRIMITIVES = ("\\pdfinfoomitdate=1", "\\pdfsuppressptexinfo=-1", "\\pdftrailerid{}")
PRE_COMMANDS = "".join(REPRO_PRIMITIVES)
DETERMINISTIC_ENV = {"SOURCE_DATE_EPOCH": "0", "FORCE_SOURCE_DATE": "1", "TZ": "UTC"}

_BIB_REFERENCE = re.compile(r"\\(bibliography|addbibresource)\s*[\[{]")
_CITATION = re.compile(r"\\citation\{|\\abx@aux@cite")
# leftovers from an earlier compile that the engine would read back in
INTERMEDIATE_SUFFIXES = (".aux", ".bbl", ".blg", ".toc", ".lof", ".lot", ".out", ".bcf", ".run.xml")


class LatexError(RuntimeError):
    def __init__(self, message: str, log_path: Path | None = None):
        self.log_path = log_path
        super().__init__(message if log_path is None else f"{message} (see {log_path})")


class FixedPointError(LatexError):
    pass


@dataclass(frozen=True)
class CompileRecipe:
    engine: tuple[str, ...] | None = None  # None: pdflatex with the default flags
    pre_commands: str = PRE_COMMANDS
    env: dict[str, str] = field(default_factory=lambda: dict(DETERMINISTIC_ENV))
    max_passes: int = 5
    bibliography: tuple[str, ...] | None = None  # None: bibtex <artifacts>/<stem>

    def __post_init__(self) -> None:
        if self.max_passes < 2:
            raise ValueError("max_passes must be at least 2")
        missing = [p for p in REPRO_PRIMITIVES if p not in self.pre_commands]
        if missing and self.pre_commands:
            raise ValueError(f"pre_commands lacks reproducibility primitives: {missing}")

    @classmethod
    def for_manifest(cls, m: ProjectManifest, **overrides) -> CompileRecipe:
        return cls(engine=m.latex_engine_command, bibliography=m.bibliography_command, **overrides)

    def without_repro_flags(self) -> CompileRecipe:
        """Diagnostic recipe: no primitives and no SOURCE_DATE_EPOCH pinning."""
        env = {k: v for k, v in self.env.items() if k not in ("SOURCE_DATE_EPOCH", "FORCE_SOURCE_DATE")}
        return replace(self, pre_commands="", env=env)

    @property
    def reproducible(self) -> bool:
        return bool(self.pre_commands)

    def engine_argv(self, m: ProjectManifest) -> list[str]:
        base = list(self.engine) if self.engine else [
            "pdflatex", "-interaction=nonstopmode", "-halt-on-error",
            "-output-directory", m.artifacts_dir, f"-jobname={m.stem}",
        ]
        return base + [f"{self.pre_commands}\\input{{{m.latex_main}}}"]

    def bibliography_argv(self, m: ProjectManifest) -> list[str]:
        base = list(self.bibliography) if self.bibliography else ["bibtex"]
        return base + [f"{m.artifacts_dir}/{m.stem}"]


def needs_bibliography(tex_text: str, aux_text: str) -> bool:
    """A bibliography pass runs only if one is referenced and something is cited."""
    body = "\n".join(strip_comment(line) for line in tex_text.splitlines())
    return bool(_BIB_REFERENCE.search(body)) and bool(_CITATION.search(aux_text))


def _digest_or_none(p: Path) -> str | None:
    return compute_digest(p) if p.is_file() else None


def compile_document(m: ProjectManifest, backend, recipe: CompileRecipe | None = None, *, log_dir: Path | None = None) -> Path:
    """Run engine (and bibliography) passes until the .aux file stops changing.

    Intermediate files from a previous compile are removed first, so the
    result never depends on what an earlier, different input left behind.
    """
    recipe = recipe or CompileRecipe.for_manifest(m)
    out_dir = m.artifacts_path
    out_dir.mkdir(parents=True, exist_ok=True)
    log_dir = log_dir or out_dir / "logs"
    aux = out_dir / f"{m.stem}.aux"
    pdf = out_dir / f"{m.stem}.pdf"
    for suffix in INTERMEDIATE_SUFFIXES:
        (out_dir / f"{m.stem}{suffix}").unlink(missing_ok=True)

    def run(argv: list[str], log_name: str) -> None:
        spec = RunSpec(
            image=m.latex_image,
            command=tuple(argv),
            env=recipe.env,
            mounts=(Mount(m.root, CONTAINER_WORKDIR, True),),
            workdir=CONTAINER_WORKDIR,
        )
        result = backend.run(spec, log_path=log_dir / log_name)
        if not result.ok:
            raise LatexError(f"{argv[0]} exited with status {result.exit_code}", result.log_path)

    engine = recipe.engine_argv(m)
    run(engine, "CompileLatex.log")
    previous = _digest_or_none(aux)
    passes = 1

    tex_text = m.path(m.latex_main).read_text(encoding="utf-8", errors="replace")
    aux_text = aux.read_text(encoding="utf-8", errors="replace") if aux.is_file() else ""
    if needs_bibliography(tex_text, aux_text):
        run(recipe.bibliography_argv(m), "CompileLatex-bibliography.log")
    else:
        log.debug("no citations; bibliography pass skipped")

    while True:
        run(engine, "CompileLatex.log")
        passes += 1
        current = _digest_or_none(aux)
        if current == previous:
            break
        if passes >= recipe.max_passes:
            raise FixedPointError(f"{aux} still changing after {passes} passes", log_dir / "CompileLatex.log")
        previous = current

    produced = _find_pdf(m, engine)
    if not produced.is_file():
        raise LatexError(f"engine did not produce {produced}", log_dir / "CompileLatex.log")
    if produced != pdf:
        shutil.copyfile(produced, pdf)
    return pdf


def _find_pdf(m: ProjectManifest, engine: list[str]) -> Path:
    """Where the engine wrote the PDF: its -output-directory, else the project root."""
    out = None
    for i, arg in enumerate(engine):
        if arg in ("-output-directory", "--output-directory") and i + 1 < len(engine):
            out = engine[i + 1]
        elif arg.startswith(("-output-directory=", "--output-directory=")):
            out = arg.split("=", 1)[1]
    base = m.root / out if out else m.root
    return base / f"{m.stem}.pdf"
