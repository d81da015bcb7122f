import numpy as np
import pytest

from nhg.lyapunov import build_S, choose_a
from nhg.scenario import BUILTIN_NAMES, builtin_scenario

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    if rep.when == "setup" and rep.passed:
        return
    detail = getattr(item, "_criterion_detail", "")
    _CRITERIA[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the acceptance summary line."""

    def record(text):
        request.node._criterion_detail = text

    return record


@pytest.fixture(scope="session")
def scenarios():
    return {name: builtin_scenario(name) for name in BUILTIN_NAMES}


@pytest.fixture(scope="session")
def certificates(scenarios):
    """Certificates with their density exponent, built lazily per scenario."""
    cache = {}

    def get(name):
        if name not in cache:
            sc = scenarios[name]
            cert = build_S(sc)
            a, _ = choose_a(sc, cert)
            cache[name] = cert.with_a(a)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def linear_1d(scenarios):
    """uniform-1d with the perturbation switched off."""
    return scenarios["uniform-1d"].with_config(f=["0"], Df=[["0"]], beta="0", gamma="0")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
