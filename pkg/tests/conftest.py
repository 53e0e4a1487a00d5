"""Print the acceptance verdicts at the end of every run, captured or not."""

VERDICTS: dict = {}


def report(number: int, ok: bool, detail: str) -> bool:
    VERDICTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(VERDICTS[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
