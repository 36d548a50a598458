import pytest

_RESULTS = {}


@pytest.fixture
def measured(request):
    """Collects short measurement notes for the acceptance summary line."""
    notes = []
    request.node._acceptance_notes = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        notes = list(getattr(item, "_acceptance_notes", []))
        if rep.skipped and isinstance(rep.longrepr, tuple):
            notes = [rep.longrepr[2]]
        prev_status, prev_notes = _RESULTS.get(name, ("PASS", []))
        # parametrized cases share one line; any failure wins
        order = ("PASS", "SKIP", "FAIL")
        worst = max(prev_status, status, key=order.index) if name in _RESULTS else status
        _RESULTS[name] = (worst, prev_notes + notes)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, notes) in _RESULTS.items():
        detail = "; ".join(notes)
        terminalreporter.write_line(f"ACCEPTANCE {status} {name}" + (f" :: {detail}" if detail else ""))
