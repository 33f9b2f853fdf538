import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def normal_sample():
    """The toy-experiment sample: 1e5 draws of N(0,1), PCG64 seed 0."""
    return np.random.default_rng(0).standard_normal(100_000)


# one PASS/FAIL line per acceptance criterion in the terminal summary
_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, title = mark.args
    _CRITERIA[n] = (title, call.excinfo is None, item)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, item = _CRITERIA[n]
        detail = dict(item.user_properties).get("detail", "")
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
