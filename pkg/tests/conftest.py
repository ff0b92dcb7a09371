import hypothesis
import numpy as np
import pytest

from timesync.model import ModelParams

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile("default")

np.seterr(all="raise", under="ignore")


@pytest.fixture
def symmetric():
    return ModelParams(v1=0.0, v2=1.0, alpha12=1.0, alpha21=1.0)


@pytest.fixture
def asymmetric():
    return ModelParams(v1=0.3, v2=1.7, alpha12=0.6, alpha21=1.9)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        r = RESULTS[number]
        verdict = "PASS" if r.passed and r.seconds <= r.budget else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {verdict}  {r.title}")
