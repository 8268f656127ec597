"""Products with the exogenous-to-expected-intensity map Psi(t).

For an exponential kernel,

    Psi(t) = e^{Mt} + omega * M^{-1} (e^{Mt} - I),    M = A - omega*I,

so ``Psi(t) @ v`` needs one matrix-exponential action and one sparse solve,
never the dense ``m x m`` matrix. ``psi_dense`` and ``psi_series_oracle``
compute the same quantity along independent routes and are used as oracles.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .exceptions import (
    Breakdown,
    InvalidGrid,
    NoConvergence,
    NonFinite,
    NotStationary,
    SingularShift,
    TooLarge,
    ToleranceNotReached,
    ValidationError,
)
from .model import HawkesNetwork

DENSE_CAP = 500
EXPM_TOL = 1e-10
GMRES_TOL = 1e-10
GMRES_RESTART = 30
# Perron root of A/omega this close to one counts as a singular shift
SINGULAR_GAP = 1e-2
# below this ||e - v|| / ||v|| the solve route loses digits to cancellation
CANCEL_RATIO = 1e-3


class ShiftedOperator:
    """``x -> (A - omega*I) x`` (or the transpose) without forming the matrix."""

    def __init__(self, net: HawkesNetwork, transposed: bool = False):
        self.net = net
        self.transposed = bool(transposed)
        self._mat = net.AT if transposed else net.A
        self.omega = net.omega
        self.shape = net.A.shape

    def matvec(self, x):
        return self._mat @ x - self.omega * x

    __call__ = matvec

    @property
    def T(self):
        return ShiftedOperator(self.net, not self.transposed)

    @property
    def norm1(self) -> float:
        """Exact induced 1-norm of the shifted matrix."""
        absA = abs(self._mat)
        colsum = np.asarray(absA.sum(axis=0)).ravel()
        d = self._mat.diagonal()
        return float(np.max(colsum - np.abs(d) + np.abs(d - self.omega)))


class _MatrixOperator:
    def __init__(self, M):
        if sp.issparse(M):
            M = sp.csr_matrix(M, dtype=float)
            self.norm1 = float(abs(M).sum(axis=0).max()) if M.nnz else 0.0
        else:
            M = np.atleast_2d(np.asarray(M, dtype=float))
            self.norm1 = float(np.abs(M).sum(axis=0).max())
        self._M = M
        self.shape = M.shape

    def matvec(self, x):
        return self._M @ x

    __call__ = matvec


class _AugmentedOperator:
    # [[M, w], [0, 0]]: its exponential applied to e_{n+1} carries int_0^t e^{Ms} w ds.
    def __init__(self, op, w):
        self.op = op
        self.w = w
        self.norm1 = max(op.norm1, float(np.abs(w).sum()))
        n = w.size
        self.shape = (n + 1, n + 1)

    def matvec(self, x):
        y = np.empty_like(x)
        y[:-1] = self.op.matvec(x[:-1]) + x[-1] * self.w
        y[-1] = 0.0
        return y


def _as_operator(op):
    if isinstance(op, (ShiftedOperator, _MatrixOperator, _AugmentedOperator)):
        return op
    if isinstance(op, HawkesNetwork):
        return ShiftedOperator(op)
    if hasattr(op, "matvec") and hasattr(op, "norm1"):
        return op
    return _MatrixOperator(op)


def _check_tol(tol):
    if not (0 < tol <= 1e-2):
        raise ValidationError(f"tolerance must lie in (0, 1e-2], got {tol}")


def expm_action(op, t, v, tol=EXPM_TOL, *, theta=1.0, max_terms=80):
    """Approximate ``expm(M * t) @ v`` by scaled truncated Taylor series.

    The interval is cut into ``s = ceil(||M||_1 t / theta)`` substeps so each
    substep has norm at most ``theta``; each substep's series stops once two
    consecutive terms are below ``tol`` relative to the partial sum.

    Args:
        op: a :class:`ShiftedOperator`, dense array or sparse matrix.
        t: time, ``t >= 0``.
        v: vector.
        tol: relative tolerance in ``(0, 1e-2]``.
    """
    _check_tol(tol)
    if t < 0:
        raise ValidationError(f"t must be >= 0, got {t}")
    v = np.array(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFinite("input vector is not finite")
    if t == 0:
        return v
    op = _as_operator(op)
    s = max(1, math.ceil(op.norm1 * t / theta))
    h = t / s
    f = v
    for _ in range(s):
        acc = f.copy()
        term = f
        prev = np.linalg.norm(term, np.inf)
        for k in range(1, max_terms + 1):
            term = (h / k) * op.matvec(term)
            acc += term
            cur = np.linalg.norm(term, np.inf)
            if prev + cur <= tol * np.linalg.norm(acc, np.inf):
                break
            prev = cur
        else:
            raise ToleranceNotReached(f"Taylor series not converged in {max_terms} terms")
        f = acc
        if not np.all(np.isfinite(f)):
            raise NonFinite("matrix exponential action overflowed")
    return f


def gmres_solve(op, b, tol=GMRES_TOL, restart=GMRES_RESTART, maxiter=None, x0=None):
    """Restarted GMRES for ``op(x) = b``.

    Arnoldi with modified Gram-Schmidt builds an orthonormal Krylov basis;
    Givens rotations keep the Hessenberg least-squares problem triangular so
    the residual norm is available at every step.

    Args:
        op: callable ``x -> op(x)``, object with ``matvec``, or a matrix.
        tol: stop once ``||op(x) - b|| <= tol * ||b||``.
        restart: Krylov dimension per cycle.
        maxiter: cap on total Arnoldi steps (default ``10 * n``).

    Raises:
        Breakdown: the Krylov space became invariant while the residual is
            still above tolerance (operator singular on the subspace).
        NoConvergence: iteration budget exhausted.
    """
    _check_tol(tol)
    if restart < 1:
        raise ValidationError("restart must be >= 1")
    if callable(op) and not hasattr(op, "matvec"):
        matvec = op
    else:
        matvec = _as_operator(op).matvec
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise NonFinite("right-hand side is not finite")
    n = b.size
    if maxiter is None:
        maxiter = 10 * n
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n)
    target = tol * bnorm
    eps = np.finfo(float).eps
    steps = 0
    r = b - matvec(x)
    beta = np.linalg.norm(r)
    while True:
        if beta <= target:
            return x
        if steps >= maxiter:
            raise NoConvergence(steps, beta / bnorm)
        k = min(restart, n)
        V = np.zeros((k + 1, n))
        R = np.zeros((k + 1, k))
        cs = np.zeros(k)
        sn = np.zeros(k)
        g = np.zeros(k + 1)
        g[0] = beta
        V[0] = r / beta
        invariant = False
        j = 0
        for j in range(k):
            w = matvec(V[j])
            steps += 1
            wnorm = np.linalg.norm(w)
            for i in range(j + 1):
                R[i, j] = V[i] @ w
                w -= R[i, j] * V[i]
            hnext = np.linalg.norm(w)
            invariant = hnext <= 1e2 * eps * max(wnorm, 1e-300)
            for i in range(j):
                a, c = R[i, j], R[i + 1, j]
                R[i, j] = cs[i] * a + sn[i] * c
                R[i + 1, j] = -sn[i] * a + cs[i] * c
            rho = math.hypot(R[j, j], hnext)
            if rho == 0.0:
                raise Breakdown("zero Krylov direction; operator singular on the Krylov space")
            cs[j], sn[j] = R[j, j] / rho, hnext / rho
            R[j, j] = rho
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            if abs(g[j + 1]) <= target or invariant or steps >= maxiter:
                break
            V[j + 1] = w / hnext
        jj = j + 1
        diag = np.abs(np.diag(R[:jj, :jj]))
        if diag.min() <= 1e2 * eps * diag.max():
            raise Breakdown("singular Hessenberg factor; operator singular on the Krylov space")
        y = sla.solve_triangular(R[:jj, :jj], g[:jj])
        x = x + V[:jj].T @ y
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        if invariant and beta > target:
            raise Breakdown(
                f"Krylov space invariant with relative residual {beta / bnorm:.3e}"
            )


def _integral_action(op, t, v, tol):
    # int_0^t e^{Ms} v ds = t * phi1(Mt) v, via the augmented exponential.
    scale = float(np.abs(v).sum())
    if scale == 0.0:
        return np.zeros_like(v)
    aug = _AugmentedOperator(op, v / scale)
    e = np.zeros(v.size + 1)
    e[-1] = 1.0
    return scale * expm_action(aug, t, e, tol)[:-1]


def psi_apply(
    net: HawkesNetwork,
    t,
    v,
    tol=EXPM_TOL,
    *,
    transposed=False,
    restart=GMRES_RESTART,
    maxiter=None,
    fallback=True,
):
    """``Psi(t) @ v`` (or ``Psi(t).T @ v``) without forming ``Psi(t)``.

    Steps: ``e = expm((A - wI) t) v``, solve ``(A - wI) x = e - v`` by GMRES,
    return ``e + w x``. When GMRES breaks down or stalls because ``A - wI`` is
    (nearly) singular, the removable singularity is avoided by computing
    ``w * int_0^t e^{Ms} v ds`` directly, unless ``fallback`` is False, in
    which case :class:`SingularShift` is raised.
    """
    if t < 0:
        raise ValidationError(f"t must be >= 0, got {t}")
    v = np.array(v, dtype=float)
    if v.shape != (net.m,):
        raise ValidationError(f"vector has shape {v.shape}, expected ({net.m},)")
    if not np.all(np.isfinite(v)):
        raise NonFinite("input vector is not finite")
    if t == 0:
        return v
    op = ShiftedOperator(net, transposed)
    e = expm_action(op, t, v, tol)
    if _near_singular(net):
        if not fallback:
            raise SingularShift("A - omega*I is (nearly) singular")
        return e + net.omega * _integral_action(op, t, v, tol)
    if np.linalg.norm(e - v) <= CANCEL_RATIO * np.linalg.norm(v):
        return e + net.omega * _integral_action(op, t, v, tol)
    try:
        x = gmres_solve(op, e - v, tol, restart, maxiter)
    except (NoConvergence, Breakdown) as exc:
        if not fallback:
            raise SingularShift(str(exc)) from exc
        return e + net.omega * _integral_action(op, t, v, tol)
    return e + net.omega * x


def _near_singular(net: HawkesNetwork) -> bool:
    """Whether the Perron root of ``A/omega`` is within ``SINGULAR_GAP`` of one.

    A residual-based solve cannot see a near-null direction of ``A - wI``, so
    this is checked up front. The column/row-sum bound settles most networks
    without a power iteration; the answer is cached on the network.
    """
    key = "_psi_near_singular"
    if key not in net.__dict__:
        A = abs(net.A)
        bound = min(np.asarray(A.sum(axis=0)).max(initial=0.0), np.asarray(A.sum(axis=1)).max(initial=0.0)) / net.omega
        if bound <= 1 - SINGULAR_GAP:
            flag = False
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                flag = abs(spectral_radius(net) - 1.0) < SINGULAR_GAP
        net.__dict__[key] = flag  # frozen dataclass: cache like functools.cached_property
    return net.__dict__[key]


def psi_transpose_apply(net: HawkesNetwork, t, v, tol=EXPM_TOL, **kw):
    """``Psi(t).T @ v``; the closed form is the same expression in ``M.T``."""
    return psi_apply(net, t, v, tol, transposed=True, **kw)


def psi_dense(net: HawkesNetwork, t, max_m=DENSE_CAP):
    """Dense ``Psi(t)`` by scaling-and-squaring ``expm`` and an LU solve.

    Oracle only: refuses networks with more than ``max_m`` users.
    """
    m = net.m
    if m > max_m:
        raise TooLarge(f"dense Psi limited to m <= {max_m}, got m={m}")
    if t < 0:
        raise ValidationError(f"t must be >= 0, got {t}")
    eye = np.eye(m)
    if t == 0:
        return eye
    M = net.A.toarray() - net.omega * eye
    E = sla.expm(M * t)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            X = sla.solve(M, E - eye)
    except (sla.LinAlgError, sla.LinAlgWarning) as exc:
        raise SingularShift(str(exc)) from exc
    return E + net.omega * X


def psi_series_oracle(net: HawkesNetwork, t, v, K=20, dt=None, *, return_terms=False, max_grid=5000):
    """Sum of generation terms ``sum_{k<=K} G^{*k}(t) v`` by numerical convolution.

    Each generation is ``h_k(s) = int_0^s A e^{-w(s-r)} h_{k-1}(r) dr`` with
    ``h_0 = v``, discretized with the trapezoid rule on a uniform grid of
    step ``dt`` (default ``t/1000``). Error is roughly
    ``O(rho(A/w)^(K+1)) + O(dt^2)``.

    With ``return_terms`` the per-generation vectors ``(K+1, m)`` at time
    ``t`` are returned instead of their sum.
    """
    m = net.m
    if m > DENSE_CAP:
        raise TooLarge(f"series oracle limited to m <= {DENSE_CAP}")
    if K < 0:
        raise InvalidGrid("K must be >= 0")
    v = np.asarray(v, dtype=float)
    terms = np.zeros((K + 1, m))
    terms[0] = v
    if t == 0 or K == 0:
        return terms if return_terms else terms.sum(axis=0)
    if dt is None:
        dt = t / 1000.0
    if not (0 < dt <= t / 100.0 * (1 + 1e-12)):
        raise InvalidGrid(f"need 0 < dt <= t/100, got dt={dt}, t={t}")
    N = int(round(t / dt))
    if N > max_grid:
        raise InvalidGrid(f"grid of {N} steps exceeds {max_grid}")
    h = t / N
    s = h * np.arange(N + 1)
    lag = s[:, None] - s[None, :]
    W = np.where(lag >= 0, np.exp(-net.omega * np.clip(lag, 0, None)), 0.0) * h
    W[:, 0] *= 0.5
    W[np.arange(N + 1), np.arange(N + 1)] *= 0.5
    W[0, 0] = 0.0
    AT = net.A.T.toarray()
    H = np.tile(v, (N + 1, 1))
    for k in range(1, K + 1):
        H = (W @ H) @ AT
        terms[k] = H[-1]
    return terms if return_terms else terms.sum(axis=0)


def spectral_radius(net: HawkesNetwork, tol=1e-8, maxiter=10_000, full_output=False):
    """Perron root of ``A / omega`` by power iteration from the all-ones vector.

    ``A`` is nonnegative, so the dominant eigenvalue is real and equals the
    spectral radius. A nilpotent matrix annihilates the iterate and yields 0.
    Periodic matrices can make the plain iteration oscillate; the shifted
    matrix ``I + A/omega`` (same Perron vector, root shifted by one) is used
    as a fallback.

    Returns ``rho``, or ``(rho, converged)`` when ``full_output`` is set; a
    non-converged estimate also emits a ``RuntimeWarning``.
    """
    G = net.A / net.omega

    def iterate(shift):
        x = np.full(net.m, 1.0 / net.m)
        est, step = 0.0, np.inf
        for _ in range(maxiter):
            y = G @ x + shift * x
            ny = float(np.abs(y).sum())
            if ny == 0.0:
                return 0.0, True
            new = ny - shift
            x = y / ny
            prev_step, step = step, abs(new - est)
            est = new
            # geometric tail estimate of the remaining error
            q = step / prev_step if prev_step > 0 else 0.0
            tail = step * q / (1 - q) if q < 1 else np.inf
            scale = tol * max(abs(new), 1e-300)
            if step <= scale and tail <= scale:
                return new, True
        return est, False

    rho, ok = iterate(0.0)
    if not ok:
        rho, ok = iterate(1.0)
    if not ok:
        warnings.warn(f"spectral radius power iteration did not converge; estimate {rho:.6g}",
                      RuntimeWarning, stacklevel=2)
    rho = max(rho, 0.0)
    return (rho, ok) if full_output else rho


def stationary_intensity(net: HawkesNetwork, lambda0, tol=GMRES_TOL):
    """Solve ``(I - A/omega) mu = lambda0`` for the long-run mean intensity."""
    rho = spectral_radius(net)
    if rho >= 1.0:
        raise NotStationary(rho)
    lam = np.asarray(lambda0, dtype=float)
    A, w = net.A, net.omega

    def op(x):
        return x - (A @ x) / w

    return gmres_solve(op, lam, tol, maxiter=max(10 * net.m, 100))
