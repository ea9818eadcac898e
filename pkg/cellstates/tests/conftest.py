"""Shared fixtures and the acceptance-line reporter.

The acceptance test registers one PASS/FAIL line per criterion through the
record_criterion fixture; the lines are printed in a dedicated section at the
end of the pytest run so the verdicts are visible without -s.
"""

from importlib import resources
from pathlib import Path

import pytest

_ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Run one acceptance criterion, record its verdict line, then assert."""

    def run(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001 - verdict line must survive any failure
            _ACCEPTANCE_LINES.append((name, False, f"raised {type(exc).__name__}: {exc}"))
            raise
        _ACCEPTANCE_LINES.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")


@pytest.fixture(scope="session")
def toy_counts_path() -> Path:
    """The bundled 8-cell counts fixture."""
    return Path(resources.files("cellstates") / "fixtures" / "toy8" / "counts.mtx")
