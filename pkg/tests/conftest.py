import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance verdicts, filled in by test_acceptance.py and printed at the end
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
