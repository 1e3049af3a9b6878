import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    name = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        msg = str(rep.longrepr.reprcrash.message) if hasattr(rep.longrepr, "reprcrash") else "error"
        _results[name] = ("FAIL", detail or msg.splitlines()[0][:160])
    elif rep.when == "call":
        _results[name] = ("PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in _results.items():
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())
