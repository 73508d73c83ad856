import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


def _order(label: str):
    digits = "".join(ch for ch in label if ch.isdigit())
    return int(digits), label


@pytest.fixture
def record_criterion():
    def record(label, ok: bool, detail: str) -> None:
        label = str(label)
        line = f"criterion {label:>3}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[label] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for label in sorted(ACCEPTANCE_LINES, key=_order):
            terminalreporter.write_line(ACCEPTANCE_LINES[label])
