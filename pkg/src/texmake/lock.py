"""One build per project: a PID lock file with stale-lock reclamation."""

from __future__ import annotations

import errno
import logging
import os
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

log = logging.getLogger(__name__)


class LockHeld(RuntimeError):
    pass


def _pid_alive(pid: int) -> bool:
    if pid <= 0:
        return False
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def _try_create(path: Path) -> bool:
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
    except FileExistsError:
        return False
    with os.fdopen(fd, "w") as fh:
        fh.write(f"{os.getpid()}\n")
    return True


@contextmanager
def build_lock(path: str | Path) -> Iterator[None]:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not _try_create(path):
        try:
            owner = int(path.read_text().strip() or "0")
        except (ValueError, FileNotFoundError):
            owner = 0
        if owner == os.getpid() or _pid_alive(owner):
            raise LockHeld(f"another build holds {path} (pid {owner})")
        log.warning("reclaiming stale lock %s left by dead process %s", path, owner)
        path.unlink(missing_ok=True)
        if not _try_create(path):
            raise LockHeld(f"lost the race for {path}")
    try:
        yield
    finally:
        try:
            path.unlink()
        except OSError as exc:
            # clean removes the directory holding the lock
            if exc.errno != errno.ENOENT:
                raise
