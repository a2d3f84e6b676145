import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trafficuq.synthetic import generate_synthetic

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def month_series():
    return generate_synthetic(days=60, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(n, ok, detail)`` prints and keeps one verdict line per criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(n, ok, detail):
        verdict = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"[{verdict}] criterion {n}: {detail}"
        lines.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
