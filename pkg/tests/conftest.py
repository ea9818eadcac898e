"""Shared fixtures and the acceptance-line reporter.

Acceptance tests register one PASS/FAIL line per criterion; the lines are
printed in a dedicated section at the end of the pytest run so the verdicts
are visible without -s.
"""

import numpy as np
import pytest

from layersweep.container import CellAnnotations, EmbeddingStack, make_cell_ids

_ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def run_criterion(name, fn):
    """Run one acceptance criterion, record its verdict line, then assert."""
    try:
        ok, detail = fn()
    except Exception as exc:  # noqa: BLE001 - verdict line must survive any failure
        _ACCEPTANCE_LINES.append((name, False, f"raised {type(exc).__name__}: {exc}"))
        raise
    _ACCEPTANCE_LINES.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")


@pytest.fixture
def small_stack():
    """Two-layer stack over six cells with full annotations."""
    rng = np.random.default_rng(42)
    layers = [
        rng.normal(size=(6, 3)).astype(np.float32),
        rng.normal(size=(6, 4)).astype(np.float32),
    ]
    ids = make_cell_ids(6)
    ann = CellAnnotations(
        cell_ids=ids,
        reference_pseudotime=np.array([0.1, 0.5, 0.3, 0.9, 0.0, 0.7]),
        perturbation=["a", "b", "a", None, "b", "a"],
        condition=["x", "x", "y", "y", "x", "y"],
        root_cell=ids[4],
    )
    return EmbeddingStack(layers=layers, model_name="toy"), ann
