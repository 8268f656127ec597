"""Random synthetic networks for tests, demos and benchmarks."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .model import HawkesNetwork
from .psi import spectral_radius


def random_network(m, avg_degree=4.0, omega=1.0, rho=0.5, rng=None, *, self_loops=True) -> HawkesNetwork:
    """Sparse random network with influence weights rescaled to a target spectral radius.

    Each user gets ``Poisson(avg_degree)`` distinct influencers drawn
    uniformly (plus itself when ``self_loops``); weights are ``U[0.5, 1.5]``
    before rescaling so that ``rho(A)/omega == rho``. ``rho=None`` skips the
    rescaling.
    """
    rng = np.random.default_rng(rng)
    rows, cols = [], []
    for u in range(m):
        k = min(int(rng.poisson(avg_degree)), m - 1)
        if k:
            others = rng.choice(m - 1, size=k, replace=False)
            others = others + (others >= u)
            rows.extend([u] * k)
            cols.extend(others.tolist())
        if self_loops:
            rows.append(u)
            cols.append(u)
    vals = rng.uniform(0.5, 1.5, size=len(rows))
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    net = HawkesNetwork(A, omega)
    if rho is not None and A.nnz:
        r = spectral_radius(net)
        if r > 0:
            net = net.with_A(A * (rho / r))
    return net


def star_network(m, weight=0.1, omega=1.0) -> HawkesNetwork:
    """User 0 influences users ``1..m-1`` and each leaf influences user 0."""
    rows = list(range(1, m)) + [0] * (m - 1)
    cols = [0] * (m - 1) + list(range(1, m))
    A = sp.csr_matrix((np.full(2 * (m - 1), weight), (rows, cols)), shape=(m, m))
    return HawkesNetwork(A, omega)
