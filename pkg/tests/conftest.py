import pytest

_RESULTS = pytest.StashKey[list]()


class Criterion:
    """Collects one PASS/FAIL line for an acceptance criterion."""

    def __init__(self, cid: str, title: str, gated: bool = True):
        self.cid, self.title, self.gated = cid, title, gated
        self.passed: bool | None = None
        self.detail = ""

    def check(self, passed: bool, detail: str) -> None:
        self.passed, self.detail = bool(passed), detail
        if self.gated:
            assert passed, f"{self.cid} failed: {detail}"

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if not self.gated:
            status = f"SOFT-{status} (reported, not gated)"
        return f"{self.cid} {status}  {self.title}: {self.detail}"


def pytest_configure(config):
    config.stash[_RESULTS] = []
    config.addinivalue_line("markers", "criterion(cid, title, gated=True): acceptance criterion")


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    crit = Criterion(*marker.args, **marker.kwargs)
    yield crit
    if crit.passed is None:
        crit.passed, crit.detail = False, "raised before reporting a result"
    request.config.stash[_RESULTS].append(crit)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for crit in sorted(results, key=lambda c: int(c.cid[1:])):
            terminalreporter.write_line(crit.line())
