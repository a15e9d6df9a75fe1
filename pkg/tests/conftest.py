from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fusioncdrf.data import Dataset, FusionConfig

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def tiny_dataset() -> Dataset:
    x = np.array([[0.1, 0.2], [0.3, 0.1], [0.5, 0.5], [0.0, 0.9]])
    a = np.array([0.1, 0.4, 0.6, 0.9])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    s = np.array([1, 1, 2, 3])
    return Dataset(x, a, y, s)


@pytest.fixture
def fusion_123() -> FusionConfig:
    return FusionConfig(sources_x={1, 2}, sources_y={2, 3})


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def record(number: int, name: str, passed: bool, detail: str) -> None:
        line = f"criterion {number} [{name}]: {'PASS' if passed else 'FAIL'} ({detail})"
        print(line)
        _ACCEPTANCE.append(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
