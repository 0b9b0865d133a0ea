import pytest

_ACCEPTANCE: dict = {}


class AcceptanceRecorder:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.details: list = []
        self.failures: list = []
        self.finished = False

    def check(self, ok: bool, detail: str):
        self.details.append(("ok" if ok else "FAILED") + ": " + detail)
        if not ok:
            self.failures.append(detail)
        return ok

    def finish(self):
        self.finished = True
        status = "PASS" if not self.failures else "FAIL"
        line = f"{status} criterion {self.number}: {self.title}"
        _ACCEPTANCE[self.number] = (line, list(self.details))
        print("\n" + line)
        for d in self.details:
            print("    " + d)
        assert not self.failures, "; ".join(self.failures)


@pytest.fixture
def acceptance(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    rec = AcceptanceRecorder(number, title)
    yield rec
    if not rec.finished:
        _ACCEPTANCE[number] = (f"FAIL criterion {number}: {title}",
                               rec.details + ["FAILED: test stopped before all checks ran"])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        line, details = _ACCEPTANCE[number]
        terminalreporter.write_line(line)
        for d in details:
            terminalreporter.write_line("    " + d)
