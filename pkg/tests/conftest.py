import contextlib

import pytest

_RESULTS = pytest.StashKey[dict]()


class Criterion:
    def __init__(self):
        self.ok = True
        self.details = []

    def check(self, ok, detail=""):
        self.ok = self.ok and bool(ok)
        if detail:
            self.details.append(detail)
        return bool(ok)


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion's PASS/FAIL line."""
    results = request.config.stash.setdefault(_RESULTS, {})

    @contextlib.contextmanager
    def record(number, title):
        c = Criterion()
        try:
            yield c
        except BaseException as exc:
            c.ok = False
            c.details.append(f"error: {type(exc).__name__}: {exc}")
            raise
        finally:
            results[number] = (title, c.ok, "; ".join(c.details))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok, detail = results[number]
        line = f"{'PASS' if ok else 'FAIL'} {number:>2}. {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
