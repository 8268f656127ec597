"""Core domain types: network, event logs, budgets, shaping tasks, curves."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    DimensionMismatch,
    DuplicateEntry,
    InvalidKind,
    MissingTarget,
    NegativeEntry,
    NonpositiveOmega,
    ValidationError,
)

TASK_KINDS = ("cam", "mmash", "lsash", "hom")


def check_triplets(m, rows, cols, values):
    """Validate raw (row, col, value) influence entries for an ``m``-user network.

    Checks are ordered: dimensions, duplicates, signs. The first violation
    raises.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if int(m) < 1:
        raise DimensionMismatch(f"user count must be positive, got {m}")
    if not (rows.size == cols.size == values.size):
        raise DimensionMismatch("rows, cols and values must have equal length")
    bad = np.flatnonzero((rows < 0) | (rows >= m) | (cols < 0) | (cols >= m))
    if bad.size:
        i = bad[0]
        raise DimensionMismatch(f"entry ({rows[i]}, {cols[i]}) out of range for m={m}")
    if rows.size:
        key = rows * m + cols
        order = np.argsort(key, kind="stable")
        dup = np.flatnonzero(np.diff(key[order]) == 0)
        if dup.size:
            i = order[dup[0]]
            raise DuplicateEntry(rows[i], cols[i])
    if not np.all(np.isfinite(values)):
        raise ValidationError("influence entries must be finite")
    neg = np.flatnonzero(values < 0)
    if neg.size:
        i = neg[0]
        raise NegativeEntry(rows[i], cols[i], values[i])


@dataclass(frozen=True, eq=False)
class HawkesNetwork:
    """Endogenous dynamics of an ``m``-user multivariate Hawkes process.

    ``A[u, v]`` is the jump in user ``u``'s intensity caused by an event of
    user ``v``; the jump decays as ``exp(-omega * dt)``. ``A`` is held as a
    canonical CSR matrix; its transpose is cached for adjoint products.
    """

    A: sp.csr_matrix
    omega: float

    def __post_init__(self):
        A = self.A
        if sp.issparse(A):
            A = sp.csr_matrix(A, dtype=float)
            if not A.has_canonical_format:
                coo = A.tocoo()
                check_triplets(A.shape[0], coo.row, coo.col, coo.data)
                A.sum_duplicates()
        else:
            A = np.asarray(A, dtype=float)
            if A.ndim != 2:
                raise DimensionMismatch("influence matrix must be 2-D")
            A = sp.csr_matrix(A)
        A.eliminate_zeros()
        A.sort_indices()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "omega", float(self.omega))
        validate_network(self)

    @classmethod
    def from_triplets(cls, m, triplets, omega):
        """Build from ``[(row, col, value), ...]``; duplicates are rejected."""
        trip = np.asarray(list(triplets), dtype=float).reshape(-1, 3)
        rows, cols, vals = trip[:, 0], trip[:, 1], trip[:, 2]
        if np.any(rows != np.round(rows)) or np.any(cols != np.round(cols)):
            raise DimensionMismatch("row/col indices must be integers")
        check_triplets(m, rows, cols, vals)
        A = sp.csr_matrix((vals, (rows.astype(np.int64), cols.astype(np.int64))), shape=(m, m))
        return cls(A, omega)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @cached_property
    def AT(self) -> sp.csr_matrix:
        return self.A.T.tocsr()

    def triplets(self):
        """Entries as ``(rows, cols, values)`` sorted by (row, col)."""
        coo = self.A.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def kernel_matrix(self, t):
        """Triggering kernel ``A * exp(-omega * t)`` for ``t >= 0``."""
        return self.A * np.exp(-self.omega * t)

    def branching_matrix(self):
        """Expected direct offspring matrix ``A / omega``."""
        return self.A / self.omega

    def with_A(self, A):
        return HawkesNetwork(A, self.omega)

    def __eq__(self, other):
        if not isinstance(other, HawkesNetwork):
            return NotImplemented
        if self.omega != other.omega or self.A.shape != other.A.shape:
            return False
        return (self.A != other.A).nnz == 0

    __hash__ = None


def validate_network(net: HawkesNetwork) -> None:
    """Raise the first violated invariant of ``net``; return ``None`` if valid."""
    A = net.A
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise DimensionMismatch(f"influence matrix must be square and non-empty, got {A.shape}")
    if not (np.isfinite(net.omega) and net.omega > 0):
        raise NonpositiveOmega(net.omega)
    coo = A.tocoo()
    check_triplets(A.shape[0], coo.row, coo.col, coo.data)


def check_intensity(lambda0, m=None, name="lambda0") -> np.ndarray:
    """Return ``lambda0`` as a float vector after checking length and sign."""
    lam = np.asarray(lambda0, dtype=float)
    if lam.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector")
    if m is not None and lam.size != m:
        raise DimensionMismatch(f"{name} has length {lam.size}, expected {m}")
    if not np.all(np.isfinite(lam)):
        raise ValidationError(f"{name} must be finite")
    if np.any(lam < 0):
        raise ValidationError(f"{name} must be nonnegative (min {lam.min()})")
    return lam


# -- event logs --------------------------------------------------------------


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Cascade:
    """One realization on ``[0, T]``.

    ``generation`` and ``parent`` are either both ``None`` (unlabeled data)
    or integer arrays aligned with ``times``; ``parent[i] == -1`` marks an
    exogenous event, which is always generation 0.
    """

    T: float
    users: np.ndarray
    times: np.ndarray
    generation: np.ndarray | None = None
    parent: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "users", _frozen(self.users, np.int64))
        object.__setattr__(self, "times", _frozen(self.times, float))
        if (self.generation is None) != (self.parent is None):
            raise ValidationError("generation and parent labels must be given together")
        if self.generation is not None:
            object.__setattr__(self, "generation", _frozen(self.generation, np.int64))
            object.__setattr__(self, "parent", _frozen(self.parent, np.int64))
        self.validate()

    def __len__(self):
        return self.times.size

    @property
    def labeled(self) -> bool:
        return self.generation is not None

    def validate(self, m=None):
        n = self.times.size
        if self.users.size != n:
            raise DimensionMismatch("users and times differ in length")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValidationError(f"horizon must be positive, got {self.T}")
        if n:
            if np.any(np.diff(self.times) < 0):
                raise ValidationError("event times must be sorted")
            if self.times[0] < 0 or self.times[-1] > self.T:
                raise ValidationError("event times must lie in [0, T]")
            if self.users.min() < 0 or (m is not None and self.users.max() >= m):
                raise DimensionMismatch("user id out of range")
        if self.labeled:
            g, p = self.generation, self.parent
            if g.size != n or p.size != n:
                raise DimensionMismatch("labels must align with events")
            if np.any(g < 0):
                raise ValidationError("generation must be >= 0")
            if np.any((g == 0) != (p < 0)):
                raise ValidationError("generation 0 iff no parent")
            has = p >= 0
            if np.any(p[has] >= np.arange(n)[has]):
                raise ValidationError("parent must precede its child")
            if np.any(g[has] != g[p[has]] + 1):
                raise ValidationError("generation must be parent generation + 1")

    def __eq__(self, other):
        if not isinstance(other, Cascade):
            return NotImplemented
        same = (
            self.T == other.T
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.times, other.times)
            and self.labeled == other.labeled
        )
        if same and self.labeled:
            same = np.array_equal(self.generation, other.generation) and np.array_equal(
                self.parent, other.parent
            )
        return bool(same)

    __hash__ = None


@dataclass(frozen=True, eq=True)
class EventLog:
    cascades: tuple[Cascade, ...]
    m: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "cascades", tuple(self.cascades))
        if self.m is not None:
            object.__setattr__(self, "m", int(self.m))
            for c in self.cascades:
                c.validate(self.m)

    def __len__(self):
        return len(self.cascades)

    def __iter__(self):
        return iter(self.cascades)

    def __getitem__(self, i):
        return self.cascades[i]

    @property
    def labeled(self) -> bool:
        return all(c.labeled for c in self.cascades)

    @property
    def n_events(self) -> int:
        return sum(len(c) for c in self.cascades)

    def subset(self, indices: Sequence[int]) -> "EventLog":
        return EventLog(tuple(self.cascades[i] for i in indices), self.m)


def as_event_log(log) -> EventLog:
    if isinstance(log, EventLog):
        return log
    if isinstance(log, Cascade):
        return EventLog((log,))
    return EventLog(tuple(log))


# -- optimization inputs -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class BudgetSpec:
    """Per-user cost ``c`` of one unit of exogenous intensity, total budget ``C``.

    ``C == 0`` is accepted and forces the zero allocation.
    """

    c: np.ndarray
    C: float

    def __post_init__(self):
        c = _frozen(self.c, float)
        if c.size == 0 or not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise ValidationError("costs must be finite and strictly positive")
        C = float(self.C)
        if not np.isfinite(C) or C < 0:
            raise ValidationError(f"budget must be finite and >= 0, got {self.C}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "C", C)

    @classmethod
    def uniform(cls, m, C):
        return cls(np.ones(m), C)

    @property
    def m(self):
        return self.c.size

    def spent(self, lam) -> float:
        return float(self.c @ np.asarray(lam, dtype=float))


@dataclass(frozen=True, eq=False)
class ShapingTask:
    """Which utility to maximize, with its parameters and l1 weight ``gamma``.

    ``kind`` is one of ``cam`` (capped activity, needs ``alpha``), ``mmash``
    (minimax), ``lsash`` (least squares, needs ``B`` and ``v``) or ``hom``
    (entropy homogenization).
    """

    kind: str
    alpha: np.ndarray | None = None
    B: sp.csr_matrix | None = None
    v: np.ndarray | None = None
    gamma: float = 0.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in TASK_KINDS:
            raise InvalidKind(f"unknown task {self.kind!r}; expected one of {TASK_KINDS}")
        object.__setattr__(self, "kind", kind)
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma < 0:
            raise ValidationError("gamma must be >= 0")
        object.__setattr__(self, "gamma", gamma)
        if kind == "cam":
            if self.alpha is None:
                raise MissingTarget("cam needs caps alpha")
            object.__setattr__(self, "alpha", check_intensity(self.alpha, name="alpha"))
        elif self.alpha is not None:
            raise ValidationError(f"alpha is only valid for cam, not {kind}")
        if kind == "lsash":
            if self.B is None or self.v is None:
                raise MissingTarget("lsash needs B and v")
            B = sp.csr_matrix(self.B, dtype=float)
            v = _frozen(self.v, float)
            if B.shape[0] != v.size:
                raise DimensionMismatch(f"B has {B.shape[0]} rows but v has length {v.size}")
            object.__setattr__(self, "B", B)
            object.__setattr__(self, "v", v)
        elif self.B is not None or self.v is not None:
            raise ValidationError(f"B and v are only valid for lsash, not {kind}")

    @classmethod
    def cam(cls, alpha, gamma=0.0):
        return cls("cam", alpha=alpha, gamma=gamma)

    @classmethod
    def mmash(cls, gamma=0.0):
        return cls("mmash", gamma=gamma)

    @classmethod
    def lsash(cls, v, B=None, gamma=0.0):
        v = np.asarray(v, dtype=float)
        if B is None:
            B = sp.identity(v.size, format="csr")
        return cls("lsash", B=B, v=v, gamma=gamma)

    @classmethod
    def hom(cls, gamma=0.0):
        return cls("hom", gamma=gamma)

    @property
    def smooth(self) -> bool:
        return self.kind in ("lsash", "hom")

    def with_gamma(self, gamma) -> "ShapingTask":
        return ShapingTask(self.kind, self.alpha, self.B, self.v, gamma)

    def check_dim(self, m):
        if self.kind == "cam" and self.alpha.size != m:
            raise DimensionMismatch(f"alpha has length {self.alpha.size}, expected {m}")
        if self.kind == "lsash" and self.B.shape[1] != m:
            raise DimensionMismatch(f"B has {self.B.shape[1]} columns, expected {m}")


@dataclass(frozen=True, eq=False)
class IntensityCurve:
    """Piecewise-constant per-user rate: ``values[j, u]`` on ``[j*width, (j+1)*width)``."""

    width: float
    values: np.ndarray
    stderr: np.ndarray | None = field(default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise DimensionMismatch("values must be (windows, users)")
        if np.any(vals < 0):
            raise ValidationError("intensity values must be >= 0")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "width", float(self.width))

    @property
    def n_windows(self):
        return self.values.shape[0]

    @property
    def edges(self):
        return self.width * np.arange(self.n_windows + 1)

    @property
    def midpoints(self):
        return self.width * (np.arange(self.n_windows) + 0.5)

    def final(self):
        return self.values[-1]
