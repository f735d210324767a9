import pytest

_RESULTS = {}


@pytest.fixture
def record():
    """record(key, passed, detail) stores one summary line for the acceptance report."""

    def _record(key: str, passed: bool, detail: str):
        _RESULTS[key] = (bool(passed), detail)
        print(f"[{key}] {'PASS' if passed else 'FAIL'}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")

    def order(key):
        head = key.split()[0]
        return (int("".join(c for c in head if c.isdigit()) or 0), key)

    for key in sorted(_RESULTS, key=order):
        ok, detail = _RESULTS[key]
        terminalreporter.write_line(f"{key:<24} {'PASS' if ok else 'FAIL'}  {detail}")
