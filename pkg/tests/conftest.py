"""Shared test plumbing: the acceptance checklist printed after a run.

Tests in test_acceptance.py register one line per criterion through
record_acceptance(); the summary hook prints them all at the end so a
`pytest -v` transcript shows every criterion with its measured value,
pass or fail.
"""

ACCEPTANCE = []


def record_acceptance(name, ok, detail=""):
    """Register an acceptance-criterion outcome and return it for asserting."""
    ACCEPTANCE.append((name, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        tag = "PASS" if ok else "FAIL"
        line = f"{tag}: {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
