import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# acceptance results: (number, title, passed, detail), filled by test_acceptance
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {number:>2}. {title}: {detail}")
