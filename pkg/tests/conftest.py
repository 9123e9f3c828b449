import os

RESULTS = []


def record(name, passed, detail=""):
    """Register one acceptance line; printed in the terminal summary."""
    RESULTS.append((name, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    tier = "full" if os.environ.get("HLIS_FULL_ACCEPTANCE") else "fast"
    terminalreporter.section(f"acceptance criteria ({tier} tier)")
    for name, ok, detail in RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
