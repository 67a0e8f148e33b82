import numpy as np
import pytest

from sdquant.density import build_uniform_box, fig1_mixture

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = _ACCEPTANCE.get(num, (title, True))
        _ACCEPTANCE[num] = (title, prev[1] and rep.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture(scope="session")
def unit_interval():
    return build_uniform_box(0.0, 1.0, 10_000)


@pytest.fixture(scope="session")
def coarse_interval():
    return build_uniform_box(0.0, 1.0, 1000)


@pytest.fixture(scope="session")
def unit_square():
    return build_uniform_box((0.0, 0.0), (1.0, 1.0), (64, 64))


@pytest.fixture(scope="session")
def mixture64():
    return fig1_mixture(64)


@pytest.fixture(scope="session")
def mixture128():
    return fig1_mixture(128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
