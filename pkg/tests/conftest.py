import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# acceptance outcomes, filled by test_acceptance.py: name -> (passed, detail, seconds)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        passed, detail, seconds = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  ({seconds:.1f} s)  {detail}")
