import os
import shutil
import subprocess
import sys

import pytest

from texmake.lock import LockHeld, build_lock


def test_lock_is_exclusive_and_released(tmp_path):
    p = tmp_path / "a" / ".lock"
    with build_lock(p):
        assert p.read_text().strip() == str(os.getpid())
        with pytest.raises(LockHeld):
            with build_lock(p):
                pass
    assert not p.exists()


def test_stale_lock_reclaimed(tmp_path):
    proc = subprocess.run([sys.executable, "-c", "import os; print(os.getpid())"], capture_output=True, text=True)
    p = tmp_path / ".lock"
    p.write_text(proc.stdout)
    with build_lock(p):
        assert p.read_text().strip() == str(os.getpid())


def test_live_foreign_lock_held(tmp_path):
    child = subprocess.Popen([sys.executable, "-c", "import time; time.sleep(30)"])
    try:
        p = tmp_path / ".lock"
        p.write_text(f"{child.pid}\n")
        with pytest.raises(LockHeld):
            with build_lock(p):
                pass
        assert p.exists()
    finally:
        child.kill()
        child.wait()


def test_directory_removed_while_held(tmp_path):
    d = tmp_path / "artifacts"
    with build_lock(d / ".lock"):
        shutil.rmtree(d)
