import contextlib

CRITERIA: list[str] = []


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record one PASS/FAIL line for an acceptance criterion."""
    info: dict = {}
    try:
        yield info
    except BaseException as exc:
        CRITERIA.append(f"[{number}] FAIL {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        raise
    detail = f" ({info['detail']})" if info.get("detail") else ""
    CRITERIA.append(f"[{number}] PASS {title}{detail}")


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s[1:s.index("]")])):
            terminalreporter.write_line(line)
