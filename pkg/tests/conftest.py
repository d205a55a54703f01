import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparsepadm import ProblemSpec
from sparsepadm.data import GenSpec, gen_random

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

PENALTIES = ("l1", "linf", "hinge")


def random_spec(m, n, s, penalty="l1", lam=1e-3, seed=0):
    A, b, _ = gen_random(GenSpec(m, n, seed=seed))
    return ProblemSpec(A, b, penalty, lam, s)


def sparse_vector(n, s, rng, scale=1.0):
    x = np.zeros(n)
    idx = rng.choice(n, size=s, replace=False)
    x[idx] = scale * rng.standard_normal(s)
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=PENALTIES)
def penalty(request):
    return request.param


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def _report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
