import pytest


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "xfailed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props and rep.when == "call":
                rows.append((props["criterion"], outcome, props.get("title", ""), props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, outcome, title, detail in sorted(rows):
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {num:2d}. {title}: {detail}")


@pytest.fixture
def criterion(record_property, request):
    """Tag an acceptance test; the returned callable records a detail line."""
    marker = request.node.get_closest_marker("criterion")
    num, title = marker.args
    record_property("criterion", num)
    record_property("title", title)

    def detail(text):
        record_property("detail", text)
        print(f"criterion {num} ({title}): {text}")

    return detail
