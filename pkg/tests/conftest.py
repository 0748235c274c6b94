"""Prints one line per acceptance criterion at the end of the session."""

CRITERION_KEY = "criterion"


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if CRITERION_KEY not in props or rep.when != "call":
                continue
            verdict = "PASS" if rep.passed else "FAIL"
            lines.append((props[CRITERION_KEY], f"criterion {props[CRITERION_KEY]:<3} {verdict}  {props.get('detail', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
