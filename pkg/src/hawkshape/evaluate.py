"""Baseline allocations, theoretical/simulated evaluation and held-out rank correlation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .estimate import FitOptions, fit_exogenous, fit_mle
from .exceptions import InvalidKind, LengthMismatch, MissingTarget, ValidationError
from .model import BudgetSpec, HawkesNetwork, ShapingTask, as_event_log, check_intensity
from .psi import EXPM_TOL, psi_apply
from .shape import SolveOptions, pgd_solve, utility
from .simulate import empirical_intensity, simulate_cascades

logger = logging.getLogger(__name__)

BASELINES = ("XMU", "WEI", "DEG", "PRK", "UNI", "MINMU", "GRD", "PROP", "LSGRD")
NEEDS_TARGET = ("PROP", "LSGRD")
PAGERANK_DAMPING = 0.85


def half(m) -> int:
    """Size of a "half the users" selection; at least one user."""
    return max(1, m // 2)


def ranking(values, descending=False) -> np.ndarray:
    """Indices sorted by ``values``; ties keep index order."""
    values = np.asarray(values, dtype=float)
    return np.argsort(-values if descending else values, kind="stable")


def _spread(weights, c, C, idx=None):
    """Allocate cost ``C`` proportionally to ``weights`` (uniform when all zero)."""
    m = c.size
    w = np.zeros(m)
    sel = np.arange(m) if idx is None else np.asarray(idx)
    ws = np.asarray(weights, dtype=float)[sel]
    if not np.any(ws > 0):
        ws = np.ones(sel.size)
    w[sel] = ws
    return w * (C / (c @ w))


def pagerank(net: HawkesNetwork, damping=PAGERANK_DAMPING, tol=1e-10, maxiter=10_000) -> np.ndarray:
    """PageRank of the influence graph, rank flowing from each user to its influencers.

    The walk moves from ``u`` to ``v`` with probability ``A[u, v] / sum_v A[u, v]``;
    users with no influencers jump uniformly. Scores sum to one.
    """
    A = net.A
    m = net.m
    out = np.asarray(A.sum(axis=1)).ravel()
    dangling = out <= 0
    inv = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, out))
    PT = (A.T.tocsr()).multiply(inv[None, :]).tocsr()
    r = np.full(m, 1.0 / m)
    for _ in range(maxiter):
        nxt = damping * (PT @ r + r[dangling].sum() / m) + (1 - damping) / m
        nxt /= nxt.sum()
        if np.abs(nxt - r).sum() < tol:
            return nxt
        r = nxt
    logger.warning("pagerank stopped after %d iterations", maxiter)
    return r


def _psi_columns(net, t, tol):
    cache = {}

    def col(u):
        if u not in cache:
            e = np.zeros(net.m)
            e[u] = 1.0
            cache[u] = psi_apply(net, t, e, tol)
        return cache[u]

    return col


def baseline_allocate(kind, net: HawkesNetwork, t, budget: BudgetSpec, base_lambda0=None, target=None,
                      tol=EXPM_TOL) -> np.ndarray:
    """Increment of exogenous intensity chosen by a heuristic allocator.

    Kinds: ``XMU`` (top half by current activity, proportional to it), ``WEI``
    (proportional to total outgoing influence), ``DEG`` (proportional to number
    of users influenced), ``PRK`` (proportional to PageRank), ``UNI`` (equal
    split), ``MINMU`` (bottom half by activity, equal split), ``GRD`` (budget
    quanta to the least active user), ``PROP`` (proportional to ``target``)
    and ``LSGRD`` (quanta to the largest ``target - activity`` gap).
    Current activity is ``Psi(t) @ base_lambda0``. Ties go to the lower index.
    """
    kind = str(kind).upper()
    if kind not in BASELINES:
        raise InvalidKind(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    m = net.m
    base = np.zeros(m) if base_lambda0 is None else check_intensity(base_lambda0, m, "base_lambda0")
    if kind in NEEDS_TARGET:
        if target is None:
            raise MissingTarget(f"{kind} needs a target activity vector")
        target = np.asarray(target, dtype=float)
        if target.shape != (m,):
            raise ValidationError(f"target must have length {m}")
    c, C = budget.c, budget.C
    if C == 0:
        return np.zeros(m)
    if kind == "UNI":
        return _spread(np.ones(m), c, C)
    if kind == "WEI":
        return _spread(np.asarray(net.A.sum(axis=0)).ravel(), c, C)
    if kind == "DEG":
        coo = net.A.tocoo()
        off = coo.row != coo.col
        return _spread(np.bincount(coo.col[off], minlength=m).astype(float), c, C)
    if kind == "PRK":
        return _spread(pagerank(net), c, C)
    if kind == "PROP":
        return _spread(np.maximum(target, 0.0), c, C)
    mu = psi_apply(net, t, base, tol)
    if kind == "XMU":
        return _spread(mu, c, C, ranking(mu, descending=True)[: half(m)])
    if kind == "MINMU":
        return _spread(np.ones(m), c, C, ranking(mu)[: half(m)])

    # greedy allocators: quantum of cost C/(10m) per step
    col = _psi_columns(net, t, tol)
    quantum = C / (10 * m)
    delta = np.zeros(m)
    spent = 0.0
    touched = set()
    cap = half(m)
    while spent + quantum <= C * (1 + 1e-12):
        if kind == "GRD":
            u = int(ranking(mu)[0])
            if u not in touched and len(touched) >= cap:
                break
        else:
            gap = target - mu
            u = int(ranking(gap, descending=True)[0])
            if gap[u] <= 0:
                break
        touched.add(u)
        amount = quantum / c[u]
        delta[u] += amount
        mu = mu + amount * col(u)
        spent += quantum
    return delta


def evaluate_theoretical(task: ShapingTask, net: HawkesNetwork, t, lam, tol=EXPM_TOL) -> float:
    """Task utility (without the l1 term) at the expected activity ``Psi(t) @ lam``."""
    task.check_dim(net.m)
    return utility(task, psi_apply(net, t, check_intensity(lam, net.m, "lam"), tol))


def evaluate_simulated(task: ShapingTask, net: HawkesNetwork, t, lam, nruns=50, window=None, seed=0,
                       *, threads=1) -> float:
    """Task utility at the empirical activity of the last full window, averaged over ``nruns`` cascades on ``[0, t]``.

    ``window`` defaults to ``t / 10``.
    """
    task.check_dim(net.m)
    if nruns < 1:
        raise ValidationError("nruns must be >= 1")
    window = t / 10 if window is None else window
    log = simulate_cascades(net, lam, t, nruns, seed, threads=threads)
    curve = empirical_intensity(log, window, t, m=net.m)
    return utility(task, curve.final())


def rank_correlation(order_a, order_b) -> float:
    """Fraction of item pairs placed in the same relative order by both rankings."""
    a = np.asarray(order_a)
    b = np.asarray(order_b)
    if a.size != b.size:
        raise LengthMismatch(f"rankings have lengths {a.size} and {b.size}")
    n = a.size
    if n < 2:
        raise ValidationError("need at least two items")
    if set(a.tolist()) != set(b.tolist()) or len(set(a.tolist())) != n:
        raise ValidationError("rankings must be permutations of the same items")
    pos_b = {item: i for i, item in enumerate(b.tolist())}
    s = np.array([pos_b[item] for item in a.tolist()])
    concordant = int(np.sum(s[:, None] < s[None, :], where=np.triu(np.ones((n, n), bool), 1)))
    return concordant / (n * (n - 1) / 2)


@dataclass(frozen=True, eq=False)
class HeldoutResult:
    score: float
    scores: tuple = field(default=())
    skipped: int = 0


def heldout_rank_correlation(intervals, task, budget: BudgetSpec, t, opts: SolveOptions | None = None, *,
                             omega, support=None, nruns=50, window=None, seed=0,
                             objective_source="simulated", train_indices=None,
                             fit_opts: FitOptions | None = None, m=None, objective_logs=None) -> HeldoutResult:
    """Mean agreement between "closest to the optimized intensity" and "best objective" orderings.

    For each training interval: fit the full model on it, keep its influence
    matrix, refit only the exogenous intensity on every other interval and
    solve the task for an optimized intensity. Intervals are ordered once by
    Euclidean distance of their intensity to the optimized one (ascending)
    and once by their objective (descending); the score is the
    :func:`rank_correlation` of the two orders.

    ``task`` is a :class:`ShapingTask` or a callable ``(net, lambda0) -> ShapingTask``
    built from the training fit. ``objective_source`` is ``"simulated"``
    (``nruns`` cascades under the fitted model), ``"theoretical"`` or
    ``"empirical"`` (last-window activity of the interval, or of
    ``objective_logs[i]`` when given). Failed intervals are skipped and
    counted.
    """
    logs = [as_event_log(iv) for iv in intervals]
    if len(logs) < 3:
        raise ValidationError("held-out evaluation needs at least 3 intervals")
    if objective_source not in ("simulated", "theoretical", "empirical"):
        raise ValidationError(f"unknown objective source {objective_source!r}")
    m = m if m is not None else logs[0].m
    if objective_logs is not None:
        objective_logs = [as_event_log(iv) for iv in objective_logs]
        if len(objective_logs) != len(logs):
            raise LengthMismatch(f"{len(objective_logs)} objective logs for {len(logs)} intervals")
    else:
        objective_logs = logs
    train = range(len(logs)) if train_indices is None else train_indices
    scores, skipped = [], 0
    for k in train:
        try:
            fit = fit_mle(logs[k], omega, support, fit_opts, m=m)
        except (ArithmeticError, ValueError) as exc:
            logger.warning("training interval %d skipped: %s", k, exc)
            skipped += 1
            continue
        net = fit.net
        tk = task(net, fit.lambda0) if callable(task) else task
        rep = pgd_solve(tk, net, t, budget, opts)
        dist, obj = [], []
        for i, log in enumerate(logs):
            if i == k:
                continue
            try:
                lam_i = fit_exogenous(log, net, fit_opts)
                if objective_source == "simulated":
                    val = evaluate_simulated(tk, net, t, lam_i, nruns, window, seed + i)
                elif objective_source == "theoretical":
                    val = evaluate_theoretical(tk, net, t, lam_i)
                else:
                    w = t / 10 if window is None else window
                    val = utility(tk, empirical_intensity(objective_logs[i], w, m=net.m).final())
            except (ArithmeticError, ValueError) as exc:
                logger.warning("interval %d skipped for training %d: %s", i, k, exc)
                skipped += 1
                continue
            dist.append(float(np.linalg.norm(rep.lam - lam_i)))
            obj.append(val)
        if len(dist) < 2:
            continue
        scores.append(rank_correlation(ranking(dist), ranking(obj, descending=True)))
    score = float(np.mean(scores)) if scores else float("nan")
    return HeldoutResult(score, tuple(scores), skipped)
