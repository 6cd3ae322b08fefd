import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    slot = _CRITERIA.setdefault(number, [title, True, 0])
    if rep.failed or rep.skipped:
        slot[1] = False
    if rep.when == "call":
        slot[2] += 1


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, ran = _CRITERIA[number]
        verdict = "PASS" if ok and ran else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
