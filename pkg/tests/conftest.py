import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_matrix_with_radius(rng, k, radius=0.9):
    """Nonsymmetric matrix with real spectrum inside [-radius, radius].

    The eigenvector matrix has condition number at most 10.
    """
    lam = rng.uniform(-radius, radius, k)
    Q1, _ = np.linalg.qr(rng.standard_normal((k, k)))
    Q2, _ = np.linalg.qr(rng.standard_normal((k, k)))
    P = (Q1 * rng.uniform(1, 10, k)) @ Q2
    return np.linalg.solve(P, np.diag(lam) @ P)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
