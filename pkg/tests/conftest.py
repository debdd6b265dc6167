import numpy as np
import pytest

from quadimmerse import data_path, load_system


def assert_close(actual, expected, tol=1e-11):
    """Absolute tolerance scaled by ``max(1, |operand|_inf)``."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = max(1.0, np.abs(actual).max(initial=0.0), np.abs(expected).max(initial=0.0))
    err = np.abs(actual - expected).max(initial=0.0)
    assert err <= tol * scale, f"max error {err:.3e} > {tol:.1e} * {scale:.3g}"


def double_integrator(nb):
    """``nb`` decoupled double integrators, ``y = 0.5 |x|^2``."""
    from quadimmerse import LqoSystem

    n = 2 * nb
    A = np.zeros((n, n))
    A[:nb, nb:] = np.eye(nb)
    B = np.vstack([np.zeros((nb, nb)), np.eye(nb)])
    return LqoSystem(A, B, (np.eye(n),), np.zeros(n))


@pytest.fixture(scope="session")
def ex1():
    return load_system(data_path("example1.json"))


@pytest.fixture(scope="session")
def ex2():
    return load_system(data_path("example2.json"))


@pytest.fixture(scope="session")
def ex3():
    return load_system(data_path("example3.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def frozen():
    import json
    import os

    with open(os.path.join(os.path.dirname(__file__), "regression.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def ex3_run():
    """The bundled Example 3 observer scenario, run once per session: ``(result, seconds)``."""
    import time

    from quadimmerse import load_scenario, run_scenario

    t0 = time.perf_counter()
    res = run_scenario(load_scenario(data_path("example3_scenario.json")))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def ex3_result(ex3_run):
    return ex3_run[0]


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
