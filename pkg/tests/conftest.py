import numpy as np
import pytest

from bykovlab.model import ModelParams


@pytest.fixture
def ref():
    """Reference parameters a1 = 1, a2 = -0.1 at the organizing center."""
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit(n, rng):
    x = rng.standard_normal((n, 4))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, [title, True, []])
    if rep.failed or rep.skipped:
        entry[1] = False
        entry[2].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, failed = _CRITERIA[n]
        line = f"criterion {n:2d}  {'PASS' if ok else 'FAIL'}  {title}"
        if failed:
            line += f"  (failed: {', '.join(sorted(set(failed)))})"
        terminalreporter.write_line(line)
