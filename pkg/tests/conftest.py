import numpy as np
import pytest

from fouflow.field import FieldPath, synthesize
from fouflow.fou import TimeGrid
from fouflow.spectrum import SpectrumConfig


def frozen_copy(field: FieldPath, dt: float, n: int, j: int = 0) -> FieldPath:
    """Field whose coefficients stay at their value at index ``j`` for all time."""
    coeffs = np.repeat(field.coeffs[:, j:j + 1], n, axis=1)
    return FieldPath(field.spectrum, field.nu, TimeGrid(0.0, dt, n), coeffs, field.seed)


def zero_field(n: int = 11, dt: float = 0.05, R: int = 2) -> FieldPath:
    spec = SpectrumConfig(kind="table", cutoff_R=R, h=1 / 3)
    field = synthesize(spec, 0.01, TimeGrid(0.0, dt, n), 0)
    assert not field.coeffs.any()
    return field


@pytest.fixture(scope="session")
def kolmogorov_r2():
    return SpectrumConfig(kind="kolmogorov", c0=0.01, cutoff_R=2, h=1 / 3)


@pytest.fixture(scope="session")
def small_field(kolmogorov_r2):
    return synthesize(kolmogorov_r2, 0.01, TimeGrid(0.0, 0.1, 201), seed=5)


@pytest.fixture(scope="session")
def long_field(kolmogorov_r2):
    return synthesize(kolmogorov_r2, 0.01, TimeGrid(0.0, 0.1, 801), seed=9)


# ---------------------------------------------------------------- acceptance
# Criterion outcomes are collected here and echoed once at the end of the run.

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
