from __future__ import annotations

import numpy as np
import pytest

from alphacomb import ReturnsPanel, SynthSpec, gen_synthetic

CRITERIA: list[str] = []


@pytest.fixture
def record():
    """Record one PASS/FAIL line for the acceptance summary."""

    def _record(label: str, passed: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] {label}" + (f"  ({detail})" if detail else "")
        CRITERIA.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def small_panel():
    panel, e, model = gen_synthetic(SynthSpec(300, 31, 2, seed=7))
    return panel, e, model


def random_panel(rng: np.random.Generator, n: int, n_obs: int) -> ReturnsPanel:
    return ReturnsPanel(rng.normal(size=(n, n_obs)) * rng.uniform(0.5, 2.0, size=(n, 1)))
