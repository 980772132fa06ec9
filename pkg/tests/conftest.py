import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sine(freq, rate, dur_s, amp=1.0):
    t = np.arange(int(round(rate * dur_s))) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def central(x, frac=0.5):
    n = x.size
    cut = int(n * (1 - frac) / 2)
    return x[cut:n - cut]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
