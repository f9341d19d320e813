"""Run image builds and commands through docker, podman, or the host.

Every backend exposes ``build_image``, ``run`` and ``image_exists`` and
returns :class:`RunResult` objects; a nonzero exit code is data, not an
exception.  Only a missing runtime or a missing executable raises.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shutil
import subprocess
import tempfile
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

log = logging.getLogger(__name__)

CONTAINER_WORKDIR = "/workdir"
RUNTIMES = ("docker", "podman")
_ENV_NAME = re.compile(r"[A-Z_][A-Z0-9_]*")


class ExecutorError(RuntimeError):
    pass


class RuntimeNotFound(ExecutorError):
    pass


class ExecutableNotFound(ExecutorError, FileNotFoundError):
    pass


class SpecError(ExecutorError, ValueError):
    pass


@dataclass(frozen=True)
class Mount:
    host: Path
    container: str
    rw: bool = True


@dataclass(frozen=True)
class RunSpec:
    image: str
    command: tuple[str, ...] = ()
    env: Mapping[str, str] = field(default_factory=dict)
    mounts: tuple[Mount, ...] = ()
    workdir: str = CONTAINER_WORKDIR

    def check(self) -> None:
        for m in self.mounts:
            if not Path(m.host).exists():
                raise SpecError(f"mount source does not exist: {m.host}")
        for name in self.env:
            if not _ENV_NAME.fullmatch(name):
                raise SpecError(f"invalid environment variable name: {name!r}")

    def host_workdir(self) -> Path:
        """Host directory that appears at ``workdir`` inside the container."""
        wd = PurePosixPath(self.workdir)
        best: tuple[int, Path] | None = None
        for m in self.mounts:
            mp = PurePosixPath(m.container)
            if wd == mp or mp in wd.parents:
                depth = len(mp.parts)
                if best is None or depth > best[0]:
                    best = (depth, Path(m.host) / wd.relative_to(mp))
        if best is None:
            raise SpecError(f"workdir {self.workdir} is not inside any mount")
        return best[1]


@dataclass(frozen=True)
class ImageBuildSpec:
    context_dir: Path
    containerfile: Path
    tag: str

    def check(self) -> None:
        ctx = Path(self.context_dir).resolve()
        cf = Path(self.containerfile).resolve()
        if ctx != cf and ctx not in cf.parents:
            raise SpecError(f"containerfile {cf} lies outside build context {ctx}")
        if not cf.is_file():
            raise SpecError(f"containerfile not found: {cf}")


@dataclass(frozen=True)
class RunResult:
    exit_code: int
    log_path: Path

    @property
    def ok(self) -> bool:
        return self.exit_code == 0


def _log_target(log_path: str | Path | None) -> Path:
    if log_path is None:
        fd, name = tempfile.mkstemp(prefix="texmake-", suffix=".log")
        os.close(fd)
        return Path(name)
    p = Path(log_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _run_logged(argv: list[str], log_path: Path, *, cwd: Path | None = None, env=None) -> int:
    log.debug("exec: %s", " ".join(argv))
    with open(log_path, "wb") as fh:
        try:
            proc = subprocess.run(argv, cwd=cwd, env=env, stdin=subprocess.DEVNULL, stdout=fh, stderr=subprocess.STDOUT)
        except FileNotFoundError:
            raise ExecutableNotFound(f"executable not found: {argv[0]}") from None
    return proc.returncode


def resolve_runtime(runtime: str = "auto") -> str:
    candidates = RUNTIMES if runtime == "auto" else (runtime,)
    if runtime != "auto" and runtime not in RUNTIMES:
        raise ValueError(f"unknown container runtime {runtime!r}")
    for name in candidates:
        path = shutil.which(name)
        if path:
            return path
    raise RuntimeNotFound(f"no container runtime found (looked for {', '.join(candidates)})")


def build_image(b: ImageBuildSpec, runtime: str = "auto", *, log_path: str | Path | None = None) -> RunResult:
    b.check()
    binary = resolve_runtime(runtime)
    target = _log_target(log_path)
    argv = [binary, "build", "-f", str(Path(b.containerfile).resolve()), "-t", b.tag, str(Path(b.context_dir).resolve())]
    return RunResult(_run_logged(argv, target), target)


def _user_flags(binary: str) -> list[str]:
    if not hasattr(os, "getuid"):
        log.warning("cannot map host user into the container on this platform")
        return []
    if Path(binary).name == "podman":
        return ["--userns=keep-id"]
    return ["--user", f"{os.getuid()}:{os.getgid()}"]


def container_argv(r: RunSpec, binary: str) -> list[str]:
    argv = [binary, "run", "--rm", "-w", r.workdir]
    argv += _user_flags(binary)
    for m in r.mounts:
        spec = f"{Path(m.host).resolve()}:{m.container}"
        argv += ["-v", spec if m.rw else spec + ":ro"]
    for k in sorted(r.env):
        argv += ["-e", f"{k}={r.env[k]}"]
    argv.append(r.image)
    argv += list(r.command)
    return argv


def run_container(r: RunSpec, runtime: str = "auto", *, log_path: str | Path | None = None) -> RunResult:
    r.check()
    binary = resolve_runtime(runtime)
    target = _log_target(log_path)
    return RunResult(_run_logged(container_argv(r, binary), target), target)


def run_local(r: RunSpec, *, log_path: str | Path | None = None) -> RunResult:
    if not r.command:
        raise SpecError("local execution needs an explicit command")
    r.check()
    env = dict(os.environ)
    # the results mode must come from RunSpec.env alone, as in a fresh container
    env.pop("FULL", None)
    env.update(r.env)
    target = _log_target(log_path)
    return RunResult(_run_logged(list(r.command), target, cwd=r.host_workdir(), env=env), target)


def image_exists(tag: str, runtime: str = "auto") -> bool:
    binary = resolve_runtime(runtime)
    proc = subprocess.run([binary, "image", "inspect", tag], stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    return proc.returncode == 0


def containerfile_cmd(path: str | Path) -> tuple[str, ...]:
    """The exec-form ``CMD [...]`` of a Containerfile, or () if there is none."""
    cmd: tuple[str, ...] = ()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped[:4].upper() == "CMD ":
            body = stripped[4:].strip()
            try:
                parsed = json.loads(body)
            except json.JSONDecodeError:
                cmd = ("/bin/sh", "-c", body)
                continue
            if isinstance(parsed, list) and all(isinstance(x, str) for x in parsed):
                cmd = tuple(parsed)
    return cmd


class ContainerBackend:
    def __init__(self, runtime: str = "auto"):
        self.name = Path(resolve_runtime(runtime)).name

    def build_image(self, b: ImageBuildSpec, *, log_path=None) -> RunResult:
        return build_image(b, self.name, log_path=log_path)

    def run(self, r: RunSpec, *, log_path=None) -> RunResult:
        return run_container(r, self.name, log_path=log_path)

    def image_exists(self, tag: str) -> bool:
        return image_exists(tag, self.name)


class LocalBackend:
    """Runs everything on the host; image builds are no-ops."""

    name = "local"

    def __init__(self, default_command: Callable[[str], tuple[str, ...]] | None = None):
        # maps an image tag to the command its CMD would run
        self.default_command = default_command

    def build_image(self, b: ImageBuildSpec, *, log_path=None) -> RunResult:
        b.check()
        target = _log_target(log_path)
        target.write_text(f"local backend: no image built for {b.tag}\n", encoding="utf-8")
        return RunResult(0, target)

    def run(self, r: RunSpec, *, log_path=None) -> RunResult:
        if not r.command and self.default_command is not None:
            cmd = self.default_command(r.image)
            if cmd:
                r = RunSpec(r.image, cmd, r.env, r.mounts, r.workdir)
        return run_local(r, log_path=log_path)

    def image_exists(self, tag: str) -> bool:
        return True


def _copy_sources(containerfile: Path) -> list[str]:
    out = []
    for line in containerfile.read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if parts and parts[0].upper() in ("COPY", "ADD"):
            out += [p for p in parts[1:-1] if not p.startswith("--")]
    return out


Recipe = Callable[["FakeBackend", RunSpec, Path], tuple[int, str]]


class FakeBackend:
    """Test double with the backend contract and no processes.

    Image ids are a hash of the Containerfile and the files it copies.
    Runs dispatch on image tag to a *recipe* ``(backend, spec, host_workdir)
    -> (exit_code, log_text)`` that must write outputs as a pure function
    of what it reads.
    """

    name = "fake"

    def __init__(self, recipes: Mapping[str, Recipe] | None = None):
        self.recipes: dict[str, Recipe] = dict(recipes or {})
        self.images: dict[str, str] = {}
        self.calls: list[tuple[str, object]] = []

    def build_image(self, b: ImageBuildSpec, *, log_path=None) -> RunResult:
        b.check()
        self.calls.append(("build_image", b))
        cf = Path(b.containerfile)
        h = hashlib.sha256(cf.read_bytes())
        for rel in _copy_sources(cf):
            p = Path(b.context_dir) / rel
            h.update(rel.encode() + b"\0" + (p.read_bytes() if p.is_file() else b"<missing>"))
        self.images[b.tag] = h.hexdigest()
        target = _log_target(log_path)
        target.write_text(f"built {b.tag}\n", encoding="utf-8")
        return RunResult(0, target)

    def run(self, r: RunSpec, *, log_path=None) -> RunResult:
        r.check()
        self.calls.append(("run", r))
        target = _log_target(log_path)
        recipe = self.recipes.get(r.image)
        if recipe is None:
            target.write_text(f"no such image: {r.image}\n", encoding="utf-8")
            return RunResult(125, target)
        code, text = recipe(self, r, r.host_workdir())
        target.write_text(text, encoding="utf-8")
        return RunResult(code, target)

    def image_exists(self, tag: str) -> bool:
        return tag in self.images or tag in self.recipes

    def executed(self, kind: str = "run") -> list:
        return [spec for k, spec in self.calls if k == kind]


def make_backend(name: str, *, default_command=None):
    if name == "local":
        return LocalBackend(default_command)
    return ContainerBackend(name)
