from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_recording():
    from gafnirs.ingest import SynthesisConfig, synthesize_recording

    return synthesize_recording(SynthesisConfig(n_trials_per_class=4, seed=3, n_channels=4,
                                                gain_scale=0.05))


# one summary line per acceptance criterion, printed after the run
_CRITERIA: dict[int, str] = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        note = self.detail if exc is None else f"{self.detail} {exc}".strip()
        _CRITERIA[self.number] = f"[{status}] criterion {self.number}: {self.title}" + (f" ({note})" if note else "")
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n].splitlines()[0])
