import re

import pytest

_failed_criteria = set()


def pytest_runtest_logreport(report):
    """Emit the FAIL counterpart for acceptance criteria that did not pass."""
    if not report.failed:
        return
    m = re.search(r"criterion_(\d+)", report.nodeid)
    if m is None:
        return
    num = int(m.group(1))
    if num in _failed_criteria:
        return
    _failed_criteria.add(num)
    print(f"criterion {num:02d}: FAIL ({report.when} stage, see traceback)",
          flush=True)


@pytest.fixture
def announce(pytestconfig):
    """Print a line straight to the terminal, past pytest's fd capture."""
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def _announce(num: int, verdict: str, detail: str) -> None:
        line = f"criterion {num:02d}: {verdict} ({detail})"
        if capman is not None:
            capman.suspend_global_capture(in_=True)
        print(line, flush=True)
        if capman is not None:
            capman.resume_global_capture()

    return _announce
