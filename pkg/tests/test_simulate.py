import numpy as np
import pytest
import scipy.sparse as sp
from scipy import stats

from hawkshape import Cascade, EventLog, HawkesNetwork, psi_apply
from hawkshape.exceptions import EmptyHorizon, ExplosionGuard, UnlabeledLog
from hawkshape.psi import psi_series_oracle
from hawkshape.simulate import (empirical_intensity, generation_counts, simulate_cascades, simulate_hawkes,
                                window_counts)
from hawkshape.synth import random_network

from conftest import scalar_net


def test_zero_exogenous_gives_empty_cascade():
    net = random_network(4, 2, 1.0, 0.5, np.random.default_rng(0))
    c = simulate_hawkes(net, np.zeros(4), 50.0, seed=1)
    assert len(c) == 0 and c.labeled


def test_poisson_count_band():
    net = HawkesNetwork(sp.csr_matrix((1, 1)), 1.0)
    c = simulate_hawkes(net, [1.0], 100.0, seed=7)
    assert 70 <= len(c) <= 130
    assert np.all(c.generation == 0) and np.all(c.parent == -1)


def test_same_seed_same_log():
    net = random_network(5, 2, 1.0, 0.6, np.random.default_rng(2))
    a = simulate_hawkes(net, np.full(5, 0.3), 30.0, seed=11)
    b = simulate_hawkes(net, np.full(5, 0.3), 30.0, seed=11)
    assert a == b
    assert a != simulate_hawkes(net, np.full(5, 0.3), 30.0, seed=12)


def test_cascade_streams_independent_of_batch_and_threads():
    net = random_network(4, 2, 1.0, 0.5, np.random.default_rng(3))
    lam = np.full(4, 0.2)
    seq = simulate_cascades(net, lam, 20.0, 6, seed=5)
    par = simulate_cascades(net, lam, 20.0, 6, seed=5, threads=3)
    assert seq == par
    assert simulate_cascades(net, lam, 20.0, 3, seed=5).cascades == seq.cascades[:3]


def test_labels_consistent():
    net = random_network(6, 3, 1.0, 0.8, np.random.default_rng(4))
    log = simulate_cascades(net, np.full(6, 0.2), 50.0, 5, seed=0)
    for c in log:
        c.validate(6)
        kids = c.parent >= 0
        # a child can only be triggered by a user that influences it
        A = net.A.toarray()
        assert np.all(A[c.users[kids], c.users[c.parent[kids]]] > 0)


def test_explosion_guard():
    with pytest.raises(ExplosionGuard):
        simulate_hawkes(scalar_net(0.9), [5.0], 1000.0, seed=0, max_events=100)


def test_supercritical_warns():
    with pytest.warns(RuntimeWarning):
        simulate_hawkes(scalar_net(1.5), [0.1], 1.0, seed=0)


def test_poisson_interarrivals_exponential():
    lam = np.array([0.5, 1.0, 2.0])
    net = HawkesNetwork(sp.csr_matrix((3, 3)), 1.0)
    c = simulate_hawkes(net, lam, 2000.0, seed=21)
    for u in range(3):
        gaps = np.diff(np.concatenate([[0.0], c.times[c.users == u]]))
        p = stats.kstest(gaps, "expon", args=(0, 1 / lam[u])).pvalue
        assert p > 0.01 / 3


def test_empirical_intensity_examples():
    empty = EventLog((Cascade(4.0, [], []),), m=2)
    assert np.all(empirical_intensity(empty, 2.0, 4.0).values == 0)
    one = EventLog((Cascade(4.0, [0], [0.5]),), m=2)
    assert empirical_intensity(one, 2.0, 4.0).values[0, 0] == pytest.approx(0.5)
    two = EventLog((Cascade(2.0, [0], [0.3]), Cascade(2.0, [0], [0.7])), m=1)
    curve = empirical_intensity(two, 1.0, 2.0)
    assert curve.values[0, 0] == pytest.approx(1.0)
    assert curve.stderr[0, 0] == pytest.approx(0.0)
    with pytest.raises(EmptyHorizon):
        empirical_intensity(one, 5.0, 4.0)


def test_partial_window_dropped():
    log = EventLog((Cascade(5.0, [0, 0], [1.0, 4.5]),), m=1)
    counts = window_counts(log, 2.0, 5.0)
    assert counts.shape == (1, 2, 1) and counts.sum() == 1


def test_generation_counts_partition():
    net = random_network(4, 2, 1.0, 0.7, np.random.default_rng(5))
    log = simulate_cascades(net, np.full(4, 0.3), 40.0, 4, seed=2)
    g = generation_counts(log, 40.0)
    assert g.sum() == log.n_events
    np.testing.assert_array_equal(g.sum(axis=0), np.bincount(np.concatenate([c.users for c in log]), minlength=4))


def test_no_influence_only_generation_zero():
    net = HawkesNetwork(sp.csr_matrix((3, 3)), 1.0)
    log = simulate_cascades(net, np.ones(3), 20.0, 3, seed=0)
    assert generation_counts(log, 20.0).shape[0] == 1


def test_unlabeled_generation_counts():
    with pytest.raises(UnlabeledLog):
        generation_counts(EventLog((Cascade(1.0, [0], [0.5]),), m=1), 1.0)


def test_offspring_ratio():
    log = simulate_cascades(scalar_net(0.5), [1.0], 200.0, 200, seed=9)
    g = generation_counts(log, 200.0)
    assert g[1, 0] / g[0, 0] == pytest.approx(0.5, abs=0.05)


def test_generation_rates_match_series_terms():
    rng = np.random.default_rng(6)
    net = random_network(3, 2, 1.0, 0.6, rng)
    lam = rng.uniform(0.5, 1.0, size=3)
    T, w, n = 6.0, 1.0, 400
    log = simulate_cascades(net, lam, T, n, seed=13)
    hits = total = 0
    for k in (0, 1, 2):
        curve = empirical_intensity(log, w, T, m=3, generation=k)
        for j, t in enumerate(curve.midpoints):
            # window average of the rate, not its midpoint value
            fine = np.linspace(t - w / 2, t + w / 2, 21)
            ref = np.mean([psi_series_oracle(net, s, lam, K=k, dt=s / 200, return_terms=True)[k] for s in fine], 0)
            se = np.maximum(curve.stderr[j], 1e-12)
            hits += np.sum(np.abs(curve.values[j] - ref) <= 3 * se)
            total += 3
    assert hits / total >= 0.9


def test_mean_intensity_tracks_psi():
    rng = np.random.default_rng(8)
    net = random_network(5, 2, 1.0, 0.7, rng)
    lam = rng.uniform(0.2, 0.6, size=5)
    log = simulate_cascades(net, lam, 10.0, 300, seed=1)
    curve = empirical_intensity(log, 1.0, 10.0, m=5)
    # window averages of Psi(s) lam by Simpson's rule over each window
    ref = np.array([(psi_apply(net, a, lam) + 4 * psi_apply(net, a + 0.5, lam) + psi_apply(net, a + 1, lam)) / 6
                    for a in curve.edges[:-1]])
    z = np.abs(curve.values - ref) / np.maximum(curve.stderr, 1e-12)
    assert np.mean(z <= 3) >= 0.95
