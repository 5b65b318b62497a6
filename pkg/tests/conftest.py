import pytest

from wikishock import kernels

_acceptance: dict[int, tuple[bool, str]] = {}


class AcceptanceRecorder:
    def __call__(self, criterion: int, ok: bool, detail: str) -> None:
        _acceptance[criterion] = (bool(ok), detail)
        assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceRecorder()


def pytest_report_header(config):
    return f"wikishock kernels: {kernels.BACKEND}"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        ok, detail = _acceptance[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
