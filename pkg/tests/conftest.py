import sys
from pathlib import Path

import pytest

# lets test modules import the shared oracles
sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[bool, str]] = {}


class _Recorder:
    def __init__(self, number: int):
        self.number = number
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            _CRITERIA[self.number] = (True, self.detail)
        else:
            _CRITERIA[self.number] = (False, f"{self.detail} {exc_type.__name__}: {exc}".strip())
        return False


@pytest.fixture
def criterion():
    """``with criterion(n) as c: ...`` records PASS/FAIL for acceptance criterion n."""
    return _Recorder


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {' '.join(detail.split())}")
