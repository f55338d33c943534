import pytest
from hypothesis import settings

from motility.acceptance import FIG1, FIG2, figure_params

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def fig1():
    Rc, params = figure_params(FIG1)
    return Rc, params


@pytest.fixture(scope="session")
def fig2():
    Rc, params = figure_params(FIG2)
    return Rc, params


@pytest.fixture(scope="session")
def fig2_wave(fig2):
    from motility.bifurcation import tw_expand

    Rc, params = fig2
    return tw_expand(Rc, params)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for res in sorted(RESULTS, key=lambda r: r.key):
            terminalreporter.write_line(res.line())
