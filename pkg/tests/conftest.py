import pytest

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion implemented by this test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "status": "PASS", "measured": []})
    if call.excinfo is not None:
        if call.excinfo.errisinstance(pytest.skip.Exception):
            entry["status"] = "SKIPPED"
        elif entry["status"] != "SKIPPED":
            entry["status"] = "FAIL"
    if call.when == "call":
        entry["measured"] += [v for k, v in item.user_properties if k == "measured"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        measured = f"  [{'; '.join(e['measured'])}]" if e["measured"] else ""
        terminalreporter.write_line(f"criterion {number:>2} {e['status']:<7} {e['title']}{measured}")
