"""Shared fixtures: seeded datasets, TV distance, and the acceptance report."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qkmeans import Dataset, preprocess

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# One verdict line per acceptance check, replayed after the run so they
# survive pytest's output capture.
_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    def record(name: str, passed: bool, detail: str, skipped: bool = False) -> bool:
        status = "SKIP" if skipped else ("PASS" if passed else "FAIL")
        _ACCEPTANCE.append(f"[{status}] {name}: {detail}")
        print(_ACCEPTANCE[-1], flush=True)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in _ACCEPTANCE:
        terminalreporter.write_line(line)


def gauss_ds(n: int, dim: int, seed: int) -> Dataset:
    """Centered Gaussian blob, the generic small test instance."""
    rng = np.random.default_rng(seed)
    return preprocess(Dataset(rng.standard_normal((n, dim))))


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@pytest.fixture
def small_gauss():
    return gauss_ds(40, 3, 7)
