import numpy as np
import pytest

from renewal_dividends import _kernels
from renewal_dividends.hjbgrid import GridSpec, solve_vi
from renewal_dividends.model import ConstantHazard, ErlangTwoHazard, ExponentialClaims, ModelParams

# benchmark model shared by the solver and Monte Carlo tests
P, C, T = 1.0, 0.05, 1.0
ERLANG_BETA = 4.0
ERLANG_LAMBDA = ERLANG_BETA**2 * T / (1.0 + ERLANG_BETA * T)


def closed_form_zero_hazard(s, x, w=None):
    return x + (P / C) * (1.0 - np.exp(-C * (T - s)))


@pytest.fixture(scope="session")
def poisson_model():
    return ModelParams(p=P, c=C, T=T, Lambda=1.0), ConstantHazard(1.0), ExponentialClaims(1.0)


@pytest.fixture(scope="session")
def erlang_model():
    return ModelParams(p=P, c=C, T=T, Lambda=ERLANG_LAMBDA), ErlangTwoHazard(ERLANG_BETA), ExponentialClaims(1.0)


@pytest.fixture(scope="session")
def zero_hazard_model():
    return (
        ModelParams(p=P, c=C, T=T, Lambda=1.0, validation_mode="degenerate"),
        ConstantHazard(0.0),
        ExponentialClaims(1.0),
    )


@pytest.fixture(scope="session")
def small_spec():
    return GridSpec(40, 40, 4.0)


@pytest.fixture(scope="session")
def poisson_small(poisson_model, small_spec):
    return solve_vi(small_spec, *poisson_model)


@pytest.fixture(scope="session")
def erlang_small(erlang_model, small_spec):
    return solve_vi(small_spec, *erlang_model)


@pytest.fixture(scope="session")
def zero_small(zero_hazard_model, small_spec):
    return solve_vi(small_spec, *zero_hazard_model)


@pytest.fixture(params=_kernels.available())
def backend(request):
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend("auto")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
