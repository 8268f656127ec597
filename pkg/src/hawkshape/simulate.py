"""Exact simulation by Ogata thinning, with branching labels, and empirical rates.

Randomness: every cascade draws from its own ``numpy`` PCG64 stream seeded by
``SeedSequence(seed, spawn_key=(cascade_index,))``, so a cascade's events
depend only on ``(seed, cascade_index)`` and the inputs, not on how many
cascades are simulated or in which process.
"""

from __future__ import annotations

import bisect
import math
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .exceptions import EmptyHorizon, ExplosionGuard, UnlabeledLog, ValidationError
from .model import Cascade, EventLog, HawkesNetwork, IntensityCurve, as_event_log, check_intensity
from .psi import spectral_radius

MAX_EVENTS = 10_000_000
# parent candidates older than this many kernel time constants carry < 1e-21 weight
_PARENT_HORIZON = 50.0


def cascade_rng(seed, index=0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def simulate_hawkes(
    net: HawkesNetwork,
    lambda0,
    T,
    seed=0,
    *,
    cascade_index=0,
    max_events=MAX_EVENTS,
    check_stationary=True,
) -> Cascade:
    """Simulate one cascade on ``[0, T]`` and label each event's parent.

    Between events every intensity decays, so the total intensity just after
    the latest event (or rejected proposal) bounds it until the next event;
    proposals are drawn at that rate and accepted with probability
    ``lambda(t) / bound``. An accepted event of user ``u`` is attributed to
    the exogenous source with probability ``lambda0[u] / lambda_u(t)`` and
    otherwise to a past event ``j`` with weight ``A[u, u_j] exp(-w (t - t_j))``.

    Raises:
        ExplosionGuard: more than ``max_events`` events.
    """
    lam0 = check_intensity(lambda0, net.m)
    T = float(T)
    if not (T > 0 and np.isfinite(T)):
        raise ValidationError(f"horizon must be positive, got {T}")
    if check_stationary and net.A.nnz:
        rho = spectral_radius(net)
        if rho >= 1:
            warnings.warn(f"spectral radius {rho:.3g} >= 1: process is not stationary",
                          RuntimeWarning, stacklevel=2)
    rng = cascade_rng(seed, cascade_index)
    m, omega = net.m, net.omega
    A, AT = net.A, net.AT
    base_total = float(lam0.sum())

    S = np.zeros(m)  # endogenous intensity per user
    R = np.zeros(m)  # exponentially decayed event count per source user
    endo_total = 0.0
    own_times = [[] for _ in range(m)]
    own_ids = [[] for _ in range(m)]
    users, times, gens, parents = [], [], [], []
    t = t_state = 0.0
    while True:
        bound = base_total + endo_total
        if bound <= 0.0:
            break
        t += rng.exponential(1.0 / bound)
        if t > T:
            break
        f = math.exp(-omega * (t - t_state))
        S *= f
        R *= f
        t_state = t
        lam_t = lam0 + S
        cum = np.cumsum(lam_t)
        total = cum[-1]
        endo_total = total - base_total
        x = rng.random() * bound
        if x >= total:
            continue
        u = int(np.searchsorted(cum, x, side="right"))
        u = min(u, m - 1)
        y = rng.random() * lam_t[u]
        if y < lam0[u] or S[u] <= 0.0:
            parent, gen = -1, 0
        else:
            lo, hi = A.indptr[u], A.indptr[u + 1]
            cols = A.indices[lo:hi]
            w = A.data[lo:hi] * R[cols]
            wc = np.cumsum(w)
            k = min(int(np.searchsorted(wc, rng.random() * wc[-1], side="right")), cols.size - 1)
            src = int(cols[k])
            st = own_times[src]
            start = min(bisect.bisect_left(st, t - _PARENT_HORIZON / omega), len(st) - 1)
            cand = np.asarray(st[start:])
            pw = np.cumsum(np.exp(-omega * (t - cand)))
            j = min(int(np.searchsorted(pw, rng.random() * pw[-1], side="right")), cand.size - 1)
            parent = own_ids[src][start + j]
            gen = gens[parent] + 1
        idx = len(times)
        if idx >= max_events:
            raise ExplosionGuard(max_events)
        users.append(u)
        times.append(t)
        gens.append(gen)
        parents.append(parent)
        own_times[u].append(t)
        own_ids[u].append(idx)
        lo, hi = AT.indptr[u], AT.indptr[u + 1]
        S[AT.indices[lo:hi]] += AT.data[lo:hi]
        R[u] += 1.0
        endo_total += float(AT.data[lo:hi].sum())
    return Cascade(T, users, times, gens, parents)


def _simulate_one(args):
    net, lam0, T, seed, index, max_events = args
    return simulate_hawkes(net, lam0, T, seed, cascade_index=index, max_events=max_events,
                           check_stationary=False)


def simulate_cascades(net, lambda0, T, n, seed=0, *, threads=1, max_events=MAX_EVENTS) -> EventLog:
    """``n`` independent cascades; cascade ``i`` uses stream ``(seed, i)``.

    With ``threads > 1`` cascades run in worker processes; the result is
    identical to the sequential one.
    """
    lam0 = check_intensity(lambda0, net.m)
    if net.A.nnz:
        rho = spectral_radius(net)
        if rho >= 1:
            warnings.warn(f"spectral radius {rho:.3g} >= 1: process is not stationary",
                          RuntimeWarning, stacklevel=2)
    jobs = [(net, lam0, T, seed, i, max_events) for i in range(int(n))]
    if threads and threads > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            cascades = list(pool.map(_simulate_one, jobs))
    else:
        cascades = [_simulate_one(j) for j in jobs]
    return EventLog(tuple(cascades), net.m)


def _n_windows(window, T):
    if not window > 0:
        raise ValidationError(f"window must be positive, got {window}")
    if T < window:
        raise EmptyHorizon(f"horizon {T} shorter than window {window}")
    # tolerate T being a multiple of window up to rounding
    return int(math.floor(T / window * (1 + 1e-12)))


def window_counts(log, window, T=None, m=None, generation=None) -> np.ndarray:
    """Event counts per ``(cascade, window, user)`` over full windows of ``[0, T)``.

    A trailing partial window is dropped. ``generation`` restricts the count
    to events of that branching generation (labeled logs only).
    """
    log = as_event_log(log)
    if T is None:
        T = min(c.T for c in log) if len(log) else window
    m = m if m is not None else (log.m if log.m is not None else
                                 1 + max((int(c.users.max()) for c in log if len(c)), default=0))
    nwin = _n_windows(window, T)
    out = np.zeros((len(log), nwin, m))
    for i, c in enumerate(log):
        keep = c.times < nwin * window
        if generation is not None:
            if not c.labeled:
                raise UnlabeledLog("generation filter needs a labeled log")
            keep &= c.generation == generation
        w = np.minimum((c.times[keep] / window).astype(np.int64), nwin - 1)
        np.add.at(out[i], (w, c.users[keep]), 1.0)
    return out


def empirical_intensity(log, window, T=None, *, m=None, generation=None) -> IntensityCurve:
    """Mean event rate per user over non-overlapping windows of width ``window``.

    ``values[j, u]`` is the count of ``u``'s events in ``[j w, (j+1) w)``
    divided by ``w``, averaged over cascades; ``stderr`` is the standard
    error of that mean across cascades (zero for a single cascade).
    """
    counts = window_counts(log, window, T, m, generation) / window
    n = counts.shape[0]
    if n == 0:
        return IntensityCurve(window, np.zeros(counts.shape[1:]))
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return IntensityCurve(window, mean, se)


def generation_counts(log, t, m=None) -> np.ndarray:
    """Cumulative event counts ``N^(k)(t)`` per generation and user, summed over cascades.

    Row ``k`` holds generation ``k``; summing rows gives the total count ``N(t)``.
    """
    log = as_event_log(log)
    if not log.labeled:
        raise UnlabeledLog("generation counts need branching labels")
    if m is None:
        m = log.m if log.m is not None else 1 + max(
            (int(c.users.max()) for c in log if len(c)), default=0)
    kmax = max((int(c.generation.max()) for c in log if len(c)), default=0)
    out = np.zeros((kmax + 1, m), dtype=np.int64)
    for c in log:
        keep = c.times <= t
        np.add.at(out, (c.generation[keep], c.users[keep]), 1)
    return out
