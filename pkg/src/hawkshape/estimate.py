"""Maximum-likelihood fitting of ``(A, lambda0)`` for a fixed kernel decay.

With ``omega`` fixed the intensity at every event is linear in the
parameters: ``lambda_{u_i}(t_i) = lambda0[u_i] + sum_e a_e X[i, e]``, where
``X[i, e]`` is the decayed count of earlier events by the source of entry
``e`` (nonzero only when ``e`` lies in row ``u_i``). The compensator is
linear too. ``X`` is computed once per data set, after which the
log-likelihood and its gradient are a sparse matvec each, and the
likelihood is concave in the parameters.

The optimizer is projected gradient ascent with Barzilai-Borwein trial
steps and Armijo backtracking on the per-event log-likelihood.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ValidationError
from .model import EventLog, HawkesNetwork, as_event_log, check_intensity

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-12


class ZeroIntensityWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class FitOptions:
    """Settings for :func:`fit_mle`.

    ``gtol`` bounds the infinity norm of the projected gradient of the
    *per-event* log-likelihood at the returned point. ``l1`` is a penalty on
    the sum of influence entries (same units as the log-likelihood).
    """

    max_iter: int = 5000
    gtol: float = 1e-6
    step_policy: str = "bb"  # "bb" or "fixed"
    step: float = 1e-2
    armijo: float = 1e-4
    backtrack: float = 0.5
    l1: float = 0.0
    omega_grid: tuple = (0.1, 1.0, 10.0)
    folds: int = 2

    def __post_init__(self):
        if self.gtol <= 0 or self.step <= 0 or self.max_iter < 1:
            raise ValidationError("tolerances, step and max_iter must be positive")
        if self.step_policy not in ("bb", "fixed"):
            raise ValidationError(f"unknown step policy {self.step_policy!r}")
        if self.l1 < 0:
            raise ValidationError("l1 penalty must be >= 0")


@dataclass(frozen=True, eq=False)
class FitResult:
    net: HawkesNetwork
    lambda0: np.ndarray
    log_likelihood: float
    n_iter: int
    converged: bool
    trace: np.ndarray = None  # objective at each accepted iterate

    def __iter__(self):
        # allows ``net, lambda0 = fit_mle(...)``
        return iter((self.net, self.lambda0))


def _infer_m(log: EventLog, m=None):
    if m is not None:
        return int(m)
    if log.m is not None:
        return log.m
    return 1 + max((int(c.users.max()) for c in log if len(c)), default=0)


def _support_pattern(support, m):
    """Sorted (rows, cols) of free influence entries; diagonals always included."""
    if support is None:
        rows, cols = np.divmod(np.arange(m * m), m)
    else:
        if isinstance(support, HawkesNetwork):
            support = support.A
        if sp.issparse(support):
            coo = sp.coo_matrix(support)
            rows, cols = coo.row, coo.col
        else:
            arr = np.asarray(support)
            if arr.ndim == 2 and arr.shape == (m, m) and arr.dtype == bool:
                rows, cols = np.nonzero(arr)
            else:
                rows, cols = np.asarray(support[0]), np.asarray(support[1])
        rows = np.concatenate([rows, np.arange(m)])
        cols = np.concatenate([cols, np.arange(m)])
    key = np.unique(np.asarray(rows, dtype=np.int64) * m + np.asarray(cols, dtype=np.int64))
    return key // m, key % m


class LikelihoodFeatures:
    """Data-dependent, parameter-independent pieces of the log-likelihood."""

    def __init__(self, log, omega, rows, cols, m):
        log = as_event_log(log)
        self.m = m
        self.omega = float(omega)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        nnz = self.rows.size
        entries_by_row = [[] for _ in range(m)]
        for e, r in enumerate(self.rows):
            entries_by_row[r].append(e)
        self.total_T = 0.0
        comp = np.zeros(m)  # sum_j (1 - exp(-w (T - t_j))) / w per source user
        users_all, xr, xc, xv = [], [], [], []
        offset = 0
        w = self.omega
        for c in log:
            self.total_T += c.T
            n = len(c)
            if n == 0:
                continue
            t, u = c.times, c.users
            users_all.append(u)
            np.add.at(comp, u, -np.expm1(-w * (c.T - t)) / w)
            by_user = {int(s): np.flatnonzero(u == s) for s in np.unique(u)}
            decayed = {}
            for s, idx in by_user.items():
                st = t[idx]
                D = np.empty(st.size)
                acc, prev = 0.0, st[0]
                for j, tj in enumerate(st):
                    acc = acc * math.exp(-w * (tj - prev)) + 1.0
                    D[j] = acc
                    prev = tj
                decayed[s] = (st, D)
            for r, tgt_idx in by_user.items():
                tt = t[tgt_idx]
                for e in entries_by_row[r]:
                    s = int(self.cols[e])
                    if s not in decayed:
                        continue
                    st, D = decayed[s]
                    J = np.searchsorted(st, tt, side="left") - 1
                    ok = J >= 0
                    if not ok.any():
                        continue
                    vals = D[J[ok]] * np.exp(-w * (tt[ok] - st[J[ok]]))
                    xr.append(offset + tgt_idx[ok])
                    xc.append(np.full(int(ok.sum()), e))
                    xv.append(vals)
            offset += n
        self.n_events = offset
        self.users = np.concatenate(users_all) if users_all else np.zeros(0, dtype=np.int64)
        if xr:
            X = sp.csr_matrix(
                (np.concatenate(xv), (np.concatenate(xr), np.concatenate(xc))),
                shape=(offset, nnz),
            )
        else:
            X = sp.csr_matrix((offset, nnz))
        self.X = X
        self.XT = X.T.tocsr()
        self.counts = np.bincount(self.users, minlength=m).astype(float)
        self.comp = comp[self.cols]

    def intensities(self, lam0, a):
        return lam0[self.users] + self.X @ a

    def value_grad(self, lam0, a, floor=None):
        """Log-likelihood and its gradient ``(g_lambda0, g_a)``."""
        lam = self.intensities(lam0, a)
        if floor is not None:
            lam = np.maximum(lam, floor)
        with np.errstate(divide="ignore"):
            ll = np.log(lam).sum() - self.total_T * lam0.sum() - self.comp @ a
            inv = 1.0 / lam
        g_lam = np.bincount(self.users, weights=inv, minlength=self.m) - self.total_T
        g_a = self.XT @ inv - self.comp
        return float(ll), g_lam, g_a


def _features_for(net, log, support=None):
    log = as_event_log(log)
    if support is None:
        coo = net.A.tocoo()
        key = np.unique(coo.row.astype(np.int64) * net.m + coo.col)
        rows, cols = key // net.m, key % net.m
    else:
        rows, cols = _support_pattern(support, net.m)
    feats = LikelihoodFeatures(log, net.omega, rows, cols, net.m)
    a = np.asarray(net.A[rows, cols]).ravel() if rows.size else np.zeros(0)
    return feats, a


def log_likelihood(net: HawkesNetwork, lambda0, log) -> float:
    """Exact log-likelihood summed over cascades.

    Returns ``-inf`` (with a :class:`ZeroIntensityWarning` naming the first
    offending event) when some event occurs where the intensity is zero.
    """
    lam0 = check_intensity(lambda0, net.m)
    feats, a = _features_for(net, log)
    ll, _, _ = feats.value_grad(lam0, a)
    if not np.isfinite(ll):
        lam = feats.intensities(lam0, a)
        i = int(np.flatnonzero(lam <= 0)[0])
        warnings.warn(f"event {i} (user {feats.users[i]}) has zero intensity",
                      ZeroIntensityWarning, stacklevel=2)
        return -math.inf
    return ll


def ll_gradient(net: HawkesNetwork, lambda0, log, support=None):
    """Gradient of :func:`log_likelihood`.

    Returns ``(grad_A, grad_lambda0)``; ``grad_A`` is a sparse matrix holding
    the partial derivatives for the entries in ``support`` (default: the
    stored entries of ``net.A``).
    """
    lam0 = check_intensity(lambda0, net.m)
    feats, a = _features_for(net, log, support)
    _, g_lam, g_a = feats.value_grad(lam0, a)
    gA = sp.csr_matrix((g_a, (feats.rows, feats.cols)), shape=(net.m, net.m))
    return gA, g_lam


def _project_ascent(fun, x0, opts: FitOptions):
    """Maximize ``fun`` over ``x >= 0``; ``fun`` returns ``(value, grad)``."""
    x = np.maximum(np.asarray(x0, dtype=float), 0.0)
    f, g = fun(x)
    trace = [f]
    step = opts.step
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        pg = np.maximum(x + g, 0.0) - x
        if np.max(np.abs(pg), initial=0.0) <= opts.gtol:
            converged = True
            break
        s = step
        while True:
            xn = np.maximum(x + s * g, 0.0)
            d = xn - x
            fn, gn = fun(xn)
            if np.isfinite(fn) and fn >= f + opts.armijo * (g @ d):
                break
            s *= opts.backtrack
            if s < 1e-300:
                xn = None
                break
        if xn is None or not np.any(d):
            break
        if opts.step_policy == "bb":
            y = gn - g
            sy = d @ y
            step = (d @ d) / -sy if sy < 0 else s * 2.0
            step = min(max(step, 1e-12), 1e12)
        x, f, g = xn, fn, gn
        trace.append(f)
    else:
        it = opts.max_iter
    pg = np.maximum(x + g, 0.0) - x
    converged = converged or np.max(np.abs(pg), initial=0.0) <= opts.gtol
    return x, f, it, converged, np.asarray(trace)


def _fit(feats: LikelihoodFeatures, opts: FitOptions, a_fixed=None):
    m = feats.m
    scale = 1.0 / max(feats.n_events, 1)
    lam_init = feats.counts / max(feats.total_T, 1e-300)
    nnz = feats.rows.size
    l1 = opts.l1

    if a_fixed is None:
        def fun(x):
            lam0, a = x[:m], x[m:]
            ll, g_lam, g_a = feats.value_grad(lam0, a, floor=LAMBDA_FLOOR)
            return (ll - l1 * a.sum()) * scale, np.concatenate([g_lam, g_a - l1]) * scale

        x0 = np.concatenate([lam_init, np.zeros(nnz)])
    else:
        def fun(x):
            ll, g_lam, _ = feats.value_grad(x, a_fixed, floor=LAMBDA_FLOOR)
            return ll * scale, g_lam * scale

        x0 = lam_init
    x, f, it, ok, trace = _project_ascent(fun, x0, opts)
    if not ok:
        warnings.warn(f"MLE did not converge in {it} iterations; returning best iterate",
                      RuntimeWarning, stacklevel=3)
    return x, f / scale, it, ok, trace / scale


def fit_mle(logs, omega, support=None, opts: FitOptions | None = None, *, m=None) -> FitResult:
    """Fit ``A`` (restricted to ``support`` plus the diagonal) and ``lambda0``.

    Args:
        logs: an :class:`EventLog` or sequence of cascades.
        omega: kernel decay rate, held fixed.
        support: allowed entries of ``A`` as a sparse/bool matrix, a network,
            or ``(rows, cols)``; ``None`` means all entries.

    Returns:
        :class:`FitResult`; unpacks as ``(net, lambda0)``. ``converged`` is
        False when the iteration cap was hit (the best iterate is returned).
    """
    opts = opts or FitOptions()
    log = as_event_log(logs)
    if len(log) == 0:
        raise ValidationError("need at least one cascade")
    if not omega > 0:
        raise ValidationError(f"omega must be positive, got {omega}")
    m = _infer_m(log, m)
    rows, cols = _support_pattern(support, m)
    feats = LikelihoodFeatures(log, omega, rows, cols, m)
    x, _, it, ok, trace = _fit(feats, opts)
    lam0, a = x[:m], x[m:]
    A = sp.csr_matrix((a, (rows, cols)), shape=(m, m))
    A.eliminate_zeros()
    net = HawkesNetwork(A, omega)
    ll, _, _ = feats.value_grad(lam0, a)
    return FitResult(net, lam0, ll, it, ok, trace)


def fit_exogenous(logs, net: HawkesNetwork, opts: FitOptions | None = None) -> np.ndarray:
    """MLE of ``lambda0`` alone with the influence matrix held at ``net.A``."""
    opts = opts or FitOptions()
    feats, a = _features_for(net, logs)
    x = _fit(feats, opts, a_fixed=a)[0]
    return x


def _folds(n, k):
    return [np.arange(i, n, k) for i in range(k)]


def select_omega(logs, grid=None, folds=None, support=None, opts: FitOptions | None = None, *, m=None):
    """Pick the decay rate with the best mean held-out log-likelihood.

    Cascades are dealt round-robin into ``folds`` groups; each group is held
    out once while the model is fit on the rest. A fold whose fit fails is
    skipped and logged. Ties go to the earliest grid value.
    """
    opts = opts or FitOptions()
    grid = list(opts.omega_grid if grid is None else grid)
    folds = opts.folds if folds is None else int(folds)
    if not grid:
        raise ValidationError("omega grid is empty")
    if len(grid) == 1:
        return float(grid[0])
    if folds < 2:
        raise ValidationError("need at least 2 folds")
    log = as_event_log(logs)
    if len(log) < folds:
        raise ValidationError(f"{len(log)} cascades cannot form {folds} folds")
    m = _infer_m(log, m)
    best, best_score = None, -math.inf
    for omega in grid:
        scores = []
        for held in _folds(len(log), folds):
            train = np.setdiff1d(np.arange(len(log)), held)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    fit = fit_mle(log.subset(train), omega, support, opts, m=m)
                    scores.append(log_likelihood(fit.net, fit.lambda0, log.subset(held)))
            except (ArithmeticError, ValueError) as exc:
                logger.info("omega=%s: fold skipped (%s)", omega, exc)
        if not scores:
            continue
        score = float(np.mean(scores))
        if score > best_score:
            best, best_score = float(omega), score
    if best is None:
        raise ValidationError("every fold failed for every omega")
    return best
