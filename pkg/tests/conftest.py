import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.optimize import linprog

from measure_replicator import VitalRates, build_finite

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def transport_flat_norm(s, dist):
    """Flat norm in its primal (transport with creation/destruction) form.

    min sum pi_ij * min(d_ij, 2) + sum |a_i| subject to
    s_i = a_i + sum_j pi_ij - sum_j pi_ji, pi >= 0. Independent of the
    Lipschitz-dual LP used by the library.
    """
    s = np.asarray(s, dtype=float)
    n = s.size
    cost_pi = np.minimum(dist, 2.0).ravel()
    # variables: pi (n*n), a_plus (n), a_minus (n)
    c = np.concatenate([cost_pi, np.ones(n), np.ones(n)])
    A = np.zeros((n, n * n + 2 * n))
    for i in range(n):
        for j in range(n):
            A[i, i * n + j] += 1.0
            A[j, i * n + j] -= 1.0
        A[i, n * n + i] = 1.0
        A[i, n * n + n + i] = -1.0
    res = linprog(c, A_eq=A, b_eq=s, bounds=[(0, None)] * c.size, method="highs-ipm")
    assert res.status == 0
    return res.fun


@pytest.fixture
def two_atom():
    space = build_finite([[2.0, 1.0], [1.5, 1.0]])
    v = VitalRates.logistic([2.0, 1.5], [1.0, 1.0], [1.0, 1.0])
    return space, v


def pytest_terminal_summary(terminalreporter):
    try:
        from tests.test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
