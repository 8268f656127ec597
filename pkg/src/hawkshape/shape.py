"""Activity-shaping objectives, budget projection and projected-gradient solver.

The decision variable is an exogenous intensity ``lam`` (optionally added on
top of a fixed ``base``); the expected activity at time ``t`` is
``mu = Psi(t) (base + lam)``. Every utility is concave in ``mu`` and
``Psi(t)`` is linear, so each task is a concave program over
``{lam >= 0, c @ lam <= C}``. Gradients only need products with
``Psi(t).T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ValidationError
from .model import BudgetSpec, HawkesNetwork, ShapingTask, check_intensity
from .psi import EXPM_TOL, psi_apply, psi_transpose_apply

HOM_EPS = 1e-12
NONZERO_TOL = 1e-9
SMOOTH_GAP = 1e-7  # certified relative accuracy of the smoothing route


def project_feasible(lam, c, C):
    """Euclidean projection onto ``{x >= 0, c @ x <= C}``.

    If clipping at zero already meets the budget that is the answer;
    otherwise ``x = max(0, lam - tau c)`` with ``tau > 0`` chosen so that
    ``c @ x == C``, found exactly from the sorted breakpoints ``lam_i/c_i``.
    """
    lam = np.asarray(lam, dtype=float)
    c = np.asarray(c, dtype=float)
    C = float(C)
    x = np.maximum(lam, 0.0)
    if c @ x <= C:
        return x
    if C <= 0:
        return np.zeros_like(lam)
    pos = np.flatnonzero(lam > 0)
    bp = lam[pos] / c[pos]
    order = np.argsort(-bp, kind="stable")
    cp, lp, bp = c[pos][order], lam[pos][order], bp[order]
    s1 = np.cumsum(cp * lp)
    s2 = np.cumsum(cp * cp)
    taus = (s1 - C) / s2
    nxt = np.append(bp[1:], 0.0)
    k = int(np.flatnonzero((taus >= nxt) & (taus <= bp))[0]) if np.any((taus >= nxt) & (taus <= bp)) else len(bp) - 1
    tau = taus[k]
    x = np.maximum(lam - tau * c, 0.0)
    # one active-set polish removes rounding drift in c @ x
    act = x > 0
    if act.any():
        tau = (c[act] @ lam[act] - C) / (c[act] @ c[act])
        x = np.maximum(lam - tau * c, 0.0)
    return x


def utility(task: ShapingTask, mu) -> float:
    """Task utility at expected activity ``mu`` (no sparsity penalty)."""
    mu = np.asarray(mu, dtype=float)
    if task.kind == "cam":
        return float(np.minimum(mu, task.alpha).sum())
    if task.kind == "mmash":
        return float(mu.min())
    if task.kind == "lsash":
        r = task.B @ mu - task.v
        return -float(r @ r)
    pos = mu > 0
    return -float(np.sum(mu[pos] * np.log(mu[pos])))


def objective_and_gradient(task: ShapingTask, net: HawkesNetwork, t, lam, tol=EXPM_TOL, *, base=None):
    """Penalized utility ``U = utility(Psi(t)(base+lam)) - gamma * sum(lam)`` and an ascent (sub)gradient.

    Gradients, all of the form ``Psi(t).T @ w``:

    * cam: ``w`` indicates users still below their cap;
    * mmash: ``w`` is uniform over the users attaining the minimum;
    * lsash: ``w = -2 B.T (B mu - v)``;
    * hom: ``w = -(log mu + 1)`` with ``mu`` clamped at ``1e-12`` inside the log.

    ``gamma`` contributes ``-gamma`` to every component.
    """
    task.check_dim(net.m)
    lam = np.asarray(lam, dtype=float)
    x = lam if base is None else lam + base
    mu = psi_apply(net, t, x, tol)
    kind = task.kind
    if kind == "cam":
        w = (task.alpha > mu).astype(float)
    elif kind == "mmash":
        lo = mu.min()
        hit = mu <= lo + 1e-12 * max(abs(lo), 1e-300)
        w = hit / hit.sum()
    elif kind == "lsash":
        w = -2.0 * (task.B.T @ (task.B @ mu - task.v))
    else:
        w = -(np.log(np.maximum(mu, HOM_EPS)) + 1.0)
    U = utility(task, mu) - task.gamma * float(lam.sum())
    g = psi_transpose_apply(net, t, w, tol) if np.any(w) else np.zeros_like(w)
    return U, g - task.gamma


@dataclass(frozen=True)
class SolveOptions:
    """Solver settings.

    ``step_policy`` ``None`` picks backtracking for smooth tasks (lsash, hom)
    and smoothing for the piecewise-linear ones (cam, mmash). Smoothing
    solves a sequence of smooth surrogates of shrinking width by
    backtracking ascent; ``max_iter`` caps the iterations over all stages.
    Diminishing steps move the iterate a distance ``step0 * D / sqrt(j)``
    along the projected subgradient path, with ``D = C/min(c)`` the size of
    the feasible set and ``j`` counted within an epoch; an epoch ends after
    ``epoch`` steps without improvement, restarting from the best point with
    ``step0`` halved.
    """

    max_iter: int = 2000
    tol: float = 1e-10
    step_policy: str | None = None  # "fixed" | "backtracking" | "diminishing" | "smoothing"
    step0: float | None = None
    init: np.ndarray | None = None
    psi_tol: float = EXPM_TOL
    epoch: int = 50
    armijo: float = 1e-4

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ValidationError("tol and max_iter must be positive")
        if self.step_policy not in (None, "fixed", "backtracking", "diminishing", "smoothing"):
            raise ValidationError(f"unknown step policy {self.step_policy!r}")


@dataclass(frozen=True, eq=False)
class SolveReport:
    lam: np.ndarray
    objective: float
    utility: float
    trace: np.ndarray
    iterations: int
    budget_consumed: float
    nonzeros: int
    converged: bool
    messages: tuple = field(default=())


def _report(task, net, t, budget, x, U, trace, it, ok, opts, base):
    mu = psi_apply(net, t, x if base is None else x + base, opts.psi_tol)
    return SolveReport(
        lam=x,
        objective=float(U),
        utility=utility(task, mu),
        trace=np.asarray(trace, dtype=float),
        iterations=it,
        budget_consumed=budget.spent(x),
        nonzeros=int(np.count_nonzero(x > NONZERO_TOL)),
        converged=ok,
    )


def pgd_solve(task: ShapingTask, net: HawkesNetwork, t, budget: BudgetSpec,
              opts: SolveOptions | None = None, *, base=None) -> SolveReport:
    """Maximize the penalized task utility over the budget set by projected (sub)gradient ascent.

    Each iteration projects ``lam + step * g`` back onto the feasible set.
    Smooth tasks use Barzilai-Borwein trial steps with Armijo backtracking,
    so the objective trace is nondecreasing. Nonsmooth tasks by default
    follow smoothed surrogates (see :class:`SolveOptions`) and report the
    best iterate under the true objective. Slow progress never
    raises; ``converged`` is False instead.
    """
    opts = opts or SolveOptions()
    task.check_dim(net.m)
    if budget.m != net.m:
        raise ValidationError(f"budget has {budget.m} costs, network has {net.m} users")
    if base is not None:
        base = check_intensity(base, net.m, "base")
    c, C = budget.c, budget.C
    policy = opts.step_policy or ("backtracking" if task.smooth else "smoothing")
    if opts.init is not None:
        x0 = np.asarray(opts.init, dtype=float)
    else:
        x0 = np.full(net.m, C / c.sum())
    x = project_feasible(x0, c, C)

    def f(z):
        return objective_and_gradient(task, net, t, z, opts.psi_tol, base=base)

    if C == 0:
        U, _ = f(x)
        return _report(task, net, t, budget, x, U, [U], 0, True, opts, base)
    if policy == "diminishing":
        return _solve_diminishing(f, x, budget, opts, task, net, t, base)
    if policy == "smoothing":
        if task.smooth:
            raise ValidationError("smoothing applies to cam and mmash only")
        return _solve_smoothed(x, budget, opts, task, net, t, base)
    return _solve_monotone(f, x, budget, opts, policy, task, net, t, base)


def _ascend(f, x, c, C, opts, policy, max_iter, done=None):
    """Projected gradient ascent from ``x``; returns ``(x, U, trace, iterations, converged)``.

    ``done(x, U, g)``, when given, replaces the relative-change stopping rule.
    """
    U, g = f(x)
    trace = [U]
    if done is not None and done(x, U, g):
        return x, U, trace, 0, True
    step = opts.step0 if opts.step0 is not None else 1.0
    ok = False
    it = 0
    for it in range(1, max_iter + 1):
        s = step
        while True:
            xn = project_feasible(x + s * g, c, C)
            d = xn - x
            if not np.any(d):
                ok = True
                break
            Un, gn = f(xn)
            if policy == "fixed" or Un >= U + opts.armijo * (g @ d):
                break
            s *= 0.5
            if s < 1e-30:
                ok = True
                break
        if ok:
            break
        change = abs(Un - U)
        if policy != "fixed":
            sy = d @ (gn - g)
            step = (d @ d) / -sy if sy < 0 else 2.0 * s
            step = min(max(step, 1e-12), 1e12)
        x, U, g = xn, Un, gn
        trace.append(U)
        if done(x, U, g) if done is not None else change <= opts.tol * max(abs(U), 1e-300):
            ok = True
            break
    return x, U, trace, it, ok


def _ascend_accelerated(f, x, c, C, max_iter, done, L=1.0):
    """Accelerated projected ascent with a backtracking curvature estimate and momentum restarts.

    Returns ``(x, iterations, converged, L)``; stops when ``done(x, U, g)``.
    """
    U, g = f(x)
    if done(x, U, g):
        return x, 0, True, L
    y, Uy, gy = x, U, g
    theta = 1.0
    for it in range(1, max_iter + 1):
        while True:
            xn = project_feasible(y + gy / L, c, C)
            d = xn - y
            Un, gn = f(xn)
            if Un >= Uy + gy @ d - 0.5 * L * (d @ d) - 1e-15 * abs(Uy):
                break
            L *= 2.0
        if done(xn, Un, gn):
            return xn, it, True, L
        if Un < U or gy @ (xn - x) < 0:
            # momentum is pointing the wrong way: restart from the plain step
            theta = 1.0
        theta_n = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
        y = xn + ((theta - 1) / theta_n) * (xn - x)
        y = project_feasible(y, c, C)
        x, U, theta = xn, Un, theta_n
        Uy, gy = f(y) if y is not xn else (Un, gn)
        L *= 0.9
    return x, max_iter, False, L


def _solve_monotone(f, x, budget, opts, policy, task, net, t, base):
    x, U, trace, it, ok = _ascend(f, x, budget.c, budget.C, opts, policy, opts.max_iter)
    return _report(task, net, t, budget, x, U, trace, it, ok, opts, base)


def _smoothed(task, mu, eps):
    """Smooth surrogate of the cam/mmash utility within ``eps``-scale of it, and its gradient in ``mu``.

    cam replaces ``min(mu, alpha)`` by ``alpha - huber(alpha - mu)``; mmash
    replaces ``min(mu)`` by ``-eps * logsumexp(-mu / eps)``.
    """
    if task.kind == "cam":
        r = task.alpha - mu
        h = np.where(r <= 0, 0.0, np.where(r < eps, r * r / (2 * eps), r - eps / 2))
        return float(np.sum(task.alpha - h)), np.clip(r / eps, 0.0, 1.0)
    z = -mu / eps
    zmax = z.max()
    e = np.exp(z - zmax)
    return float(-eps * (zmax + np.log(e.sum()))), e / e.sum()


def fw_gap(x, g, c, C):
    """Frank-Wolfe gap ``max_s g @ (s - x)`` over the budget set; bounds the suboptimality of a concave objective."""
    ratio = g / c
    k = int(np.argmax(ratio))
    return max(0.0, ratio[k] * C) - float(g @ x)


def _linearization_bias(task, w, mu):
    # the utility is bounded above by the linear form it is smoothed into;
    # this is how far above it sits at mu
    if task.kind == "cam":
        return float(np.sum((1 - w) * task.alpha + w * mu - np.minimum(mu, task.alpha)))
    return float(w @ mu - mu.min())


def _solve_smoothed(x, budget, opts, task, net, t, base):
    """Continuation on smoothed surrogates of shrinking width, warm-starting each stage from the last.

    The surrogate gradient is ``Psi.T @ w - gamma`` with weights ``w`` in
    ``[0, 1]`` (cam) or on the simplex (mmash). For such ``w`` the utility
    is bounded above by a linear form in ``mu``, which gives the certificate
    ``U* - U(z) <= bias(w, mu(z)) + fw_gap(z)``. A stage ends when its
    Frank-Wolfe gap drops below the bias; the solve ends when the whole
    bound is within ``max(tol, SMOOTH_GAP) * max(|U|, scale)``. The
    reported point is the best iterate under the true objective.
    """
    c, C, m = budget.c, budget.C, net.m
    best = {"U": -math.inf, "x": x}
    last = {}
    true_trace = []

    def f_eps(z, eps):
        mu = psi_apply(net, t, z if base is None else z + base, opts.psi_tol)
        pen = task.gamma * float(z.sum())
        U = utility(task, mu) - pen
        true_trace.append(U)
        if U > best["U"]:
            best["U"], best["x"] = U, z
        val, w = _smoothed(task, mu, eps)
        g = psi_transpose_apply(net, t, w, opts.psi_tol) if np.any(w) else np.zeros_like(w)
        last.update(U=U, w=w, mu=mu)
        return val - pen, g - task.gamma

    mu0 = psi_apply(net, t, x if base is None else x + base, opts.psi_tol)
    best["U"] = utility(task, mu0) - task.gamma * float(x.sum())
    scale = max(float(np.mean(np.abs(mu0))), float(np.mean(task.alpha)) if task.kind == "cam" else 0.0, 1e-12)
    rel = max(opts.tol, SMOOTH_GAP)
    eps = 0.1 * scale
    used, L = 0, 1.0
    state = {"certified": False}
    while used < opts.max_iter:

        def done(z, S, g):
            bias = _linearization_bias(task, last["w"], last["mu"])
            fw = fw_gap(z, g, c, C)
            if bias + fw <= rel * max(abs(last["U"]), scale):
                state["certified"] = True
                return True
            return fw <= bias

        x, it, _, L = _ascend_accelerated(lambda z: f_eps(z, eps), x, c, C, opts.max_iter - used, done, L)
        used += max(it, 1)
        if state["certified"] or eps <= 1e-14 * scale:
            break
        eps *= 0.1
    return _report(task, net, t, budget, best["x"], best["U"], true_trace, used, state["certified"], opts, base)


def _move(x, g, dist, c, C):
    """Feasible point ``P(x + tau g)`` whose distance from ``x`` is about ``dist``.

    ``||P(x + tau g) - x||`` is nondecreasing in ``tau``, so ``tau`` is found
    by doubling then bisection; if the distance saturates below ``dist`` (the
    ray leaves the feasible set at a face) the saturated point is returned.
    """
    tau = dist / np.linalg.norm(g)
    y = project_feasible(x + tau * g, c, C)
    d = np.linalg.norm(y - x)
    lo, hi = 0.0, None
    for _ in range(60):
        if d >= dist:
            hi = tau
            break
        lo, prev = tau, d
        tau *= 2.0
        y = project_feasible(x + tau * g, c, C)
        d = np.linalg.norm(y - x)
        if d <= prev * (1 + 1e-12):
            return y
    if hi is None:
        return y
    for _ in range(12):
        mid = 0.5 * (lo + hi)
        ym = project_feasible(x + mid * g, c, C)
        if np.linalg.norm(ym - x) >= dist:
            hi, y = mid, ym
        else:
            lo = mid
    return y


def _solve_diminishing(f, x, budget, opts, task, net, t, base):
    c, C = budget.c, budget.C
    D = C / c.min()
    s0 = opts.step0 if opts.step0 is not None else 0.1
    best_x, best_U = x, -math.inf
    trace = []
    j, stale, ok = 0, 0, False
    it = 0
    for it in range(1, opts.max_iter + 1):
        U, g = f(x)
        trace.append(U)
        if U > best_U + opts.tol * max(abs(best_U), 1e-300) or best_U == -math.inf:
            stale = 0
        else:
            stale += 1
        if U > best_U:
            best_U, best_x = U, x
        if stale >= opts.epoch:
            # restart from the best point with a smaller step scale
            if s0 < opts.tol:
                ok = True
                break
            s0 *= 0.5
            x, j, stale = best_x, 0, 0
            continue
        if not np.any(g):
            ok = True
            break
        j += 1
        x = _move(x, g, s0 * D / math.sqrt(j), c, C)
    return _report(task, net, t, budget, best_x, best_U, trace, it, ok, opts, base)


def sparsity_sweep(task: ShapingTask, net: HawkesNetwork, t, budget: BudgetSpec, gammas,
                   opts: SolveOptions | None = None, *, base=None):
    """Solve once per ``gamma``; one row per value.

    Each solve starts from the previous solution, so entries zeroed at a
    smaller penalty tend to stay zero. Rows are dicts with ``gamma``,
    ``nonzeros``, ``budget_consumed``, ``utility`` (unpenalized),
    ``objective`` and ``error`` (``None`` unless that solve failed; the
    sweep carries on).
    """
    gammas = [float(gm) for gm in gammas]
    if any(b < a for a, b in zip(gammas, gammas[1:])):
        raise ValidationError("gamma list must be sorted ascending")
    opts = opts or SolveOptions()
    rows = []
    prev = None
    for gm in gammas:
        try:
            o = opts if prev is None else replace(opts, init=prev)
            rep = pgd_solve(task.with_gamma(gm), net, t, budget, o, base=base)
            prev = rep.lam
            rows.append(dict(gamma=gm, nonzeros=rep.nonzeros, budget_consumed=rep.budget_consumed,
                             utility=rep.utility, objective=rep.objective, error=None))
        except (ArithmeticError, ValueError) as exc:
            rows.append(dict(gamma=gm, nonzeros=None, budget_consumed=None, utility=None,
                             objective=None, error=str(exc)))
    return rows


def cam_caps(lambda_hat, rng, intensity=None):
    """Caps for capped activity maximization: ``intensity + U[0, 2 mean(lambda_hat)]``.

    ``intensity`` defaults to ``lambda_hat`` itself.
    """
    lambda_hat = np.asarray(lambda_hat, dtype=float)
    base = lambda_hat if intensity is None else np.asarray(intensity, dtype=float)
    return base + rng.uniform(0.0, 2.0 * lambda_hat.mean(), size=base.size)
