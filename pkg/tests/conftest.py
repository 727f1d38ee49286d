import time
from contextlib import contextmanager

import pytest

_CRITERIA = {}


@contextmanager
def _record(number, title):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        _CRITERIA[number] = (False, title, time.perf_counter() - start, f"{type(exc).__name__}: {exc}")
        line = f"CRITERION {number:>2} FAIL  {title}"
        print(line)
        raise
    _CRITERIA[number] = (True, title, time.perf_counter() - start, "")
    print(f"CRITERION {number:>2} PASS  {title}")


@pytest.fixture
def criterion():
    """Context manager recording a pass/fail line for one acceptance criterion."""
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, title, seconds, why = _CRITERIA[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"CRITERION {number:>2} {status}  {title}  ({seconds:.2f} s)")
        if why:
            terminalreporter.write_line(f"    {why.splitlines()[0][:200]}")
