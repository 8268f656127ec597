import numpy as np
import pytest
import scipy.sparse as sp

from hawkshape import HawkesNetwork
from hawkshape.synth import random_network


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar_net(a=0.5, omega=1.0):
    return HawkesNetwork(sp.csr_matrix([[a]]), omega)


def small_nets(n, seed=0, m_range=(2, 8), rho_max=0.9, omega=1.0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        out.append(random_network(m, 2.0, omega, rng.uniform(0.1, rho_max), rng))
    return out


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store a criterion's outcome for the end-of-run summary."""

    def _record(n, ok, detail=""):
        ACCEPTANCE[n] = (bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
