"""Shared pytest plumbing for the test suite.

test_acceptance.py registers one outcome per headline criterion through
record(); the hook below prints them as a compact scoreboard at the end
of the run so a long session ends with one line per criterion.
"""

ACCEPTANCE = {}


def record(num, title, passed, detail=""):
    """Register the outcome of one acceptance criterion."""
    ACCEPTANCE[int(num)] = (str(title), bool(passed), str(detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[num]
        word = "PASS" if passed else "FAIL"
        line = f"criterion {num:02d} [{word}] {title}"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
