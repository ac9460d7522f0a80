import pytest

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "passed": True, "seen": False})
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        entry["seen"] = True
        if call.excinfo is not None:
            entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        if not entry["seen"]:
            status = "SKIP"
        else:
            status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {entry['title']}")
