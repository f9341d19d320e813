from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fakes import fake_backend  # noqa: E402

from texmake.manifest import find_manifest  # noqa: E402
from texmake.scaffold import init_project  # noqa: E402

ACCEPTANCE_NAMES = {
    1: "reproducibility flagship",
    2: "nondeterminism localization",
    3: "incremental correctness",
    4: "oracle equivalence",
    5: "key-value contract",
    6: "PDF parser robustness",
    7: "byte compare semantics",
    8: "scaffold determinism",
    9: "clean semantics",
    10: "mode switch",
}


@pytest.fixture
def project(tmp_path):
    root = tmp_path / "doc"
    init_project(root)
    return find_manifest(root)


@pytest.fixture
def backend(project):
    return fake_backend(project.image_tag)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            item.user_properties.append(("criterion", m.args[0]))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    crit = dict(item.user_properties).get("criterion")
    if crit is None:
        return
    results = item.config._acceptance
    if report.when == "call" or report.failed:
        prev = results.get(crit, True)
        results[crit] = prev and report.passed


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        verdict = "PASS" if results[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2} {ACCEPTANCE_NAMES[n]:<30} {verdict}")
