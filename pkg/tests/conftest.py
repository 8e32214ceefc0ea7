"""Collects acceptance-criterion outcomes and prints one line per criterion."""

_results = []


def record_criterion(num, passed, detail=""):
    _results.append((str(num), bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, passed, detail in sorted(_results, key=lambda r: r[0]):
        line = f"criterion {num}: {'PASS' if passed else 'FAIL'}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
