"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

_criteria = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    entry = _criteria.setdefault(key, {"passed": True, "detail": "", "ran": False})
    entry["detail"] = props.get("detail", entry["detail"])
    if report.when == "call":
        entry["ran"] = True
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k.split()[0])):
        e = _criteria[key]
        status = "PASS" if e["passed"] and e["ran"] else "FAIL"
        line = f"{status} criterion {key}"
        if e["detail"]:
            line += f" | {e['detail']}"
        terminalreporter.write_line(line)
