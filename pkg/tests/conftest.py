import pytest

_RESULTS = []


class CriterionLog:
    def check(self, label, ok, detail=""):
        _RESULTS.append((label, bool(ok), detail))
        assert ok, f"{label}: {detail}"

    def note(self, label, detail):
        _RESULTS.append((label, None, detail))


@pytest.fixture(scope="session")
def criterion():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _RESULTS:
        status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"{status}  {label}  {detail}")
