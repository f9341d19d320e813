"""Project description: file roles, defaults and the ``document.conf`` format.

A project with no ``document.conf`` is described entirely by naming
conventions (``ms.tex``, ``ms.bib``, ``main.py``, ``Containerfile``,
``requirements.txt``, ``artifacts/``).  The config file only overrides them.
"""

from __future__ import annotations

import enum
import shlex
from dataclasses import dataclass, fields
from pathlib import Path

CONFIG_NAME = "document.conf"
DEFAULT_LATEX_IMAGE = "docker.io/texlive/texlive:TL2023-historic"


class ManifestError(ValueError):
    """Raised for unreadable or malformed project descriptions."""

    def __init__(self, message: str, *, path: Path | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class BuildMode(str, enum.Enum):
    DRAFT = "draft"
    FULL = "full"

    @property
    def env(self) -> dict[str, str]:
        """Environment handed to the results program."""
        return {"FULL": "1"} if self is BuildMode.FULL else {}


@dataclass(frozen=True)
class Violation:
    field: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message} ({self.path})"


@dataclass(frozen=True)
class ProjectManifest:
    root: Path
    latex_main: str = "ms.tex"
    bibliography: str | None = "ms.bib"
    results_sources: tuple[str, ...] = ("main.py",)
    containerfile: str = "Containerfile"
    container_context_extras: tuple[str, ...] = ("requirements.txt",)
    artifacts_dir: str = "artifacts"
    image_tag: str = ""
    # empty means "whatever the image's CMD is"
    results_command: tuple[str, ...] = ()
    # None means the engine argv built by latexbuild
    latex_engine_command: tuple[str, ...] | None = None
    bibliography_command: tuple[str, ...] | None = None
    latex_image: str = DEFAULT_LATEX_IMAGE

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", Path(self.root))
        if not self.image_tag:
            object.__setattr__(self, "image_tag", f"{self.root.name}-results")
        _check_structure(self)

    @property
    def stem(self) -> str:
        return Path(self.latex_main).stem

    @property
    def artifacts_path(self) -> Path:
        return self.root / self.artifacts_dir

    @property
    def pdf_relpath(self) -> str:
        return f"{self.artifacts_dir}/{self.stem}.pdf"

    @property
    def state_path(self) -> Path:
        return self.artifacts_path / ".build-state"

    def path(self, rel: str) -> Path:
        return self.root / rel


def _check_structure(m: ProjectManifest) -> None:
    """Invariants that do not need the filesystem; enforced on construction."""
    a = m.artifacts_dir
    if not a or a in (".", "..") or "/" in a or "\\" in a:
        raise ManifestError("artifacts_dir must be a single path component")
    if not m.image_tag or any(c.isspace() for c in m.image_tag):
        raise ManifestError("image_tag must be non-empty and contain no whitespace")
    if not m.latex_main:
        raise ManifestError("latex_main must not be empty")
    if not m.results_sources:
        raise ManifestError("results_sources must list at least one file")


# key -> kind; "paths" are comma-separated, "argv" are shell-quoted
_KEY_KINDS = {
    "latex_main": "str",
    "bibliography": "optional",
    "results_sources": "paths",
    "containerfile": "str",
    "container_context_extras": "paths",
    "artifacts_dir": "str",
    "image_tag": "str",
    "results_command": "argv",
    "latex_engine_command": "optional_argv",
    "bibliography_command": "optional_argv",
    "latex_image": "str",
}


def infer_manifest(directory: str | Path) -> ProjectManifest:
    d = Path(directory)
    if not d.is_dir():
        raise ManifestError("project directory does not exist or is not a directory", path=d)
    return ProjectManifest(root=d.resolve())


def _parse_value(kind: str, raw: str):
    if kind == "str":
        return raw
    if kind == "optional":
        return raw or None
    if kind == "paths":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    argv = tuple(shlex.split(raw))
    if kind == "optional_argv":
        return argv or None
    return argv


def parse_manifest(text: str, root: Path, *, source: Path | None = None) -> ProjectManifest:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ManifestError(f"malformed line {line!r}; expected 'key = value'", path=source, line=lineno)
        if key not in _KEY_KINDS:
            raise ManifestError(f"unknown key {key!r}", path=source, line=lineno)
        if key in values:
            raise ManifestError(f"duplicate key {key!r}", path=source, line=lineno)
        try:
            values[key] = _parse_value(_KEY_KINDS[key], raw.strip())
        except ValueError as exc:  # shlex quoting errors
            raise ManifestError(f"bad value for {key!r}: {exc}", path=source, line=lineno) from None
    try:
        return ProjectManifest(root=root, **values)
    except ManifestError as exc:
        raise ManifestError(str(exc), path=source) from None


def load_manifest(path: str | Path) -> ProjectManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ManifestError(f"cannot read manifest: {exc}", path=path) from None
    return parse_manifest(text, path.parent.resolve(), source=path)


def find_manifest(directory: str | Path) -> ProjectManifest:
    """Load ``document.conf`` from *directory* if present, else infer."""
    d = Path(directory)
    conf = d / CONFIG_NAME
    if conf.is_file():
        return load_manifest(conf)
    return infer_manifest(d)


def _format_value(kind: str, value) -> str:
    if value is None:
        return ""
    if kind in ("str", "optional"):
        return value
    if kind == "paths":
        return ", ".join(value)
    return shlex.join(value)


def dump_manifest(m: ProjectManifest) -> str:
    lines = []
    for f in fields(m):
        if f.name == "root":
            continue
        lines.append(f"{f.name} = {_format_value(_KEY_KINDS[f.name], getattr(m, f.name))}")
    return "\n".join(lines) + "\n"


def write_manifest(m: ProjectManifest, path: str | Path) -> None:
    Path(path).write_text(dump_manifest(m), encoding="utf-8")


def validate_manifest(m: ProjectManifest) -> list[Violation]:
    """Check the filesystem-dependent invariants; returns violations as data."""
    out: list[Violation] = []
    if not m.path(m.latex_main).is_file():
        out.append(Violation("latex_main", m.latex_main, "file not found"))
    if not m.path(m.containerfile).is_file():
        out.append(Violation("containerfile", m.containerfile, "file not found"))
    for src in m.results_sources:
        if not m.path(src).is_file():
            out.append(Violation("results_sources", src, "file not found"))
    return out
