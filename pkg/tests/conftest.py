import pytest

_ACCEPTANCE = {}


class Recorder:
    def __init__(self, store):
        self.store = store

    def __call__(self, number: int, ok: bool, detail: str = "") -> bool:
        self.store[number] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok


@pytest.fixture
def acceptance():
    return Recorder(_ACCEPTANCE)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}")
