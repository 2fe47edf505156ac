import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion -> "PASS ..." / "FAIL ..." line, filled in by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
