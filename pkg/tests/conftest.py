import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from persistome.persistence import PersistenceDiagram

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


def signal_noise_diagram(seed: int) -> PersistenceDiagram:
    """Three pairs of persistence 2.0, 1.8, 2.2 plus fifty with persistence <= 0.1."""
    rng = np.random.default_rng(seed)
    births = rng.uniform(0.0, 0.5, 53)
    pers = np.concatenate([[2.0, 1.8, 2.2], rng.uniform(0.005, 0.1, 50)])
    return PersistenceDiagram(1, np.column_stack([births, births + pers]))


def random_diagram(rng, size, dim=1) -> PersistenceDiagram:
    births = rng.uniform(0.0, 1.0, size)
    return PersistenceDiagram(dim, np.column_stack([births, births + rng.exponential(0.5, size)]))
