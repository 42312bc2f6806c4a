"""Finite-state Markov chains.

Dense transition matrices, evolution of laws and observables, structural
classification (communication classes, periods, reversibility), invariant
laws, hitting and return times, first-passage laws, and the coupling
experiment on the product chain.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from math import gcd
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyTargetSet,
    NegativeEntry,
    NotAbsorbing,
    NotIrreducible,
    RowSumOutOfTolerance,
    SingularSystem,
    ValidationError,
)
from .rng import as_stream, block_sizes, run_blocks

DEFAULT_ROW_TOL = 1e-9


class StochasticMatrix:
    """A validated dense row-stochastic matrix.

    Rows are renormalized on construction so that each sums to exactly one
    (up to floating point); the object behaves like a read-only ndarray via
    ``np.asarray``.
    """

    __slots__ = ("entries", "row_tol")

    def __init__(self, entries, row_tol: float = DEFAULT_ROW_TOL):
        self.entries = _validated(entries, row_tol)
        self.row_tol = float(row_tol)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __matmul__(self, other):
        return np.asarray(self) @ np.asarray(other)

    def __getitem__(self, item):
        return self.entries[item]

    def __repr__(self):
        return f"StochasticMatrix(n={self.n})"

    def power(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self.entries, int(k))


def _validated(raw, row_tol: float) -> np.ndarray:
    m = np.array(raw, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries")
    neg = np.argwhere(m < 0)
    if neg.size:
        x, y = map(int, neg[0])
        raise NegativeEntry(x, y, float(m[x, y]))
    sums = m.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > row_tol)[0]
    if bad.size:
        x = int(bad[0])
        raise RowSumOutOfTolerance(x, float(sums[x]))
    m /= sums[:, None]
    m.setflags(write=False)
    return m


def validate(matrix, row_tol: float = DEFAULT_ROW_TOL) -> StochasticMatrix:
    return StochasticMatrix(matrix, row_tol)


def as_stochastic(P) -> StochasticMatrix:
    if isinstance(P, StochasticMatrix):
        return P
    return StochasticMatrix(P)


def as_probability(weights, n: Optional[int] = None, tol: float = 1e-9) -> np.ndarray:
    v = np.asarray(weights, dtype=float)
    if v.ndim != 1 or (n is not None and v.shape[0] != n):
        raise DimensionMismatch(f"expected a probability vector of length {n}, got shape {v.shape}")
    if np.any(v < 0):
        raise ValidationError("probability vector has negative entries")
    if abs(v.sum() - 1.0) > tol:
        raise ValidationError(f"probability vector sums to {v.sum()!r}")
    return v


def _vector(v, n: int, what: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (n,):
        raise DimensionMismatch(f"{what} has shape {arr.shape}, expected ({n},)")
    return arr


def point_mass(n: int, x: int) -> np.ndarray:
    v = np.zeros(n)
    v[x] = 1.0
    return v


# -- evolution ---------------------------------------------------------------

def evolve_measure(mu, P, steps: int) -> np.ndarray:
    """Return the row vector mu P^steps (mass is preserved, sign is not required)."""
    P = as_stochastic(P)
    out = _vector(mu, P.n, "measure").copy()
    if steps < 0:
        raise ValueError("steps must be >= 0")
    A = P.entries
    for _ in range(int(steps)):
        out = out @ A
    return out


def apply_to_function(P, f, steps: int = 1) -> np.ndarray:
    """Return the column vector P^steps f, i.e. x -> E_x[f(X_steps)]."""
    P = as_stochastic(P)
    out = _vector(f, P.n, "function").copy()
    if steps < 0:
        raise ValueError("steps must be >= 0")
    A = P.entries
    for _ in range(int(steps)):
        out = A @ out
    return out


# -- structure ---------------------------------------------------------------

@dataclass
class ChainStructureReport:
    classes: list[list[int]]
    closed_flags: list[bool]
    irreducible: bool
    periods: list[int]
    aperiodic: bool
    reversible_vector: Optional[np.ndarray] = None

    @property
    def period(self) -> int:
        """Period of the chain when irreducible (otherwise of the first class)."""
        return self.periods[0]

    def class_of(self, state: int) -> int:
        for k, cls in enumerate(self.classes):
            if state in cls:
                return k
        raise IndexError(state)


def _class_period(A: np.ndarray, members: Sequence[int]) -> int:
    inside = np.zeros(A.shape[0], dtype=bool)
    inside[list(members)] = True
    root = members[0]
    level = {root: 0}
    queue = deque([root])
    g = 0
    while queue:
        u = queue.popleft()
        for v in np.nonzero((A[u] > 0) & inside)[0]:
            v = int(v)
            if v not in level:
                level[v] = level[u] + 1
                queue.append(v)
            else:
                g = gcd(g, abs(level[u] + 1 - level[v]))
    # A single state without a self-loop inside a class can only occur for a
    # transient singleton; its period is conventionally reported as 1.
    return g if g > 0 else 1


def _reversible_vector(A: np.ndarray, tol: float = 1e-9) -> Optional[np.ndarray]:
    n = A.shape[0]
    pos = A > 0
    if np.any(pos != pos.T):
        return None
    alpha = np.full(n, np.nan)
    for root in range(n):
        if not np.isnan(alpha[root]):
            continue
        alpha[root] = 1.0
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y in np.nonzero(pos[x])[0]:
                if np.isnan(alpha[y]):
                    alpha[y] = alpha[x] * A[x, y] / A[y, x]
                    queue.append(int(y))
    flux = alpha[:, None] * A
    scale = np.maximum(np.abs(flux), np.abs(flux.T))
    if np.any(np.abs(flux - flux.T) > tol * np.maximum(scale, 1e-300)):
        return None
    return alpha / alpha.sum()


def _strong_labels(A: np.ndarray) -> tuple[int, np.ndarray]:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    return connected_components(csr_matrix(A > 0), directed=True, connection="strong")


def classify(P) -> ChainStructureReport:
    """Communication classes, closedness, periods and a reversible vector if any."""
    P = as_stochastic(P)
    A = P.entries
    n_comp, labels = _strong_labels(A)
    classes = [sorted(np.nonzero(labels == k)[0].tolist()) for k in range(n_comp)]
    classes.sort(key=lambda c: c[0])
    closed = []
    for cls in classes:
        outside = np.ones(P.n, dtype=bool)
        outside[cls] = False
        closed.append(not np.any(A[np.ix_(cls, np.nonzero(outside)[0])] > 0))
    periods = [_class_period(A, cls) for cls in classes]
    irreducible = len(classes) == 1
    return ChainStructureReport(
        classes=classes,
        closed_flags=closed,
        irreducible=irreducible,
        periods=periods,
        aperiodic=all(p == 1 for p in periods),
        reversible_vector=_reversible_vector(A),
    )


def is_irreducible(P) -> bool:
    P = as_stochastic(P)
    n_comp, _ = _strong_labels(P.entries)
    return n_comp == 1


def _require_irreducible(P: StochasticMatrix) -> None:
    if not is_irreducible(P):
        raise NotIrreducible("the chain has more than one communication class")


# -- invariant law and hitting times ---------------------------------------

def invariant_distribution(P) -> np.ndarray:
    """Unique pi with pi P = pi for an irreducible chain."""
    P = as_stochastic(P)
    _require_irreducible(P)
    n = P.n
    system = P.entries.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(pi)):
        raise SingularSystem("invariant law solve produced non-finite values")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = np.abs(pi @ P.entries - pi).sum()
    if residual > 1e-10:
        raise SingularSystem(f"invariant law residual {residual:.3e} exceeds 1e-10")
    return pi


def _states(target, n: int) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(target, dtype=int))
    if idx.size == 0:
        raise EmptyTargetSet("target set is empty")
    if np.any((idx < 0) | (idx >= n)):
        raise DimensionMismatch("target state out of range")
    return np.unique(idx)


def mean_hitting_times(P, target) -> np.ndarray:
    """h(x) = E_x[first n >= 0 with X_n in target]; zero on the target.

    Solves (I - Q) h = 1 with Q the matrix restricted to non-target states.
    """
    P = as_stochastic(P)
    tgt = _states(target, P.n)
    free = np.setdiff1d(np.arange(P.n), tgt)
    h = np.zeros(P.n)
    if free.size == 0:
        return h
    Q = P.entries[np.ix_(free, free)]
    system = np.eye(free.size) - Q
    try:
        sol = np.linalg.solve(system, np.ones(free.size))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("target is not reached almost surely from every state") from exc
    if not np.all(np.isfinite(sol)) or np.any(sol < 0):
        raise SingularSystem("mean hitting time system is degenerate")
    h[free] = sol
    return h


def mean_return_time(P, x: int, rel_tol: float = 1e-8) -> float:
    """E_x[tau_x] = 1/pi(x), cross-checked against the first-step equations."""
    P = as_stochastic(P)
    _require_irreducible(P)
    pi = invariant_distribution(P)
    via_pi = 1.0 / pi[x]
    h = mean_hitting_times(P, [x])
    via_taboo = 1.0 + P.entries[x] @ h
    if abs(via_pi - via_taboo) > rel_tol * via_pi:
        raise SingularSystem(
            f"return time mismatch: 1/pi = {via_pi!r}, first-step = {via_taboo!r}"
        )
    return float(via_pi)


def absorption_probability(P, absorbing: Iterable[int], target: int) -> np.ndarray:
    """h(x) = P_x[chain is absorbed at `target`], harmonic off the absorbing set."""
    P = as_stochastic(P)
    A = P.entries
    absorbing = _states(list(absorbing), P.n)
    for s in absorbing:
        if A[s, s] != 1.0:
            raise NotAbsorbing(int(s))
    if target not in set(absorbing.tolist()):
        raise ValidationError("target must belong to the absorbing set")
    free = np.setdiff1d(np.arange(P.n), absorbing)
    h = np.zeros(P.n)
    h[target] = 1.0
    if free.size:
        system = np.eye(free.size) - A[np.ix_(free, free)]
        try:
            h[free] = np.linalg.solve(system, A[free, target])
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("some transient states never reach the absorbing set") from exc
    return h


# -- first passage -----------------------------------------------------------

@dataclass
class FirstPassageLaw:
    start: int
    target: list[int]
    probabilities: np.ndarray  # probabilities[m-1] = P_start[tau = m]
    horizon: int
    residual: float  # P_start[tau > horizon]

    def total(self) -> float:
        return float(self.probabilities.sum() + self.residual)


def first_passage_law(P, start: int, target, horizon: int) -> FirstPassageLaw:
    """Law of tau = inf{n >= 1: X_n in target} up to `horizon`, via the taboo matrix."""
    P = as_stochastic(P)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    tgt = _states(target, P.n)
    A = P.entries
    into_target = A[:, tgt].sum(axis=1)
    killed = A.copy()
    killed[:, tgt] = 0.0
    alive = point_mass(P.n, start)
    q = np.empty(horizon)
    for m in range(horizon):
        q[m] = alive @ into_target
        alive = alive @ killed
    residual = float(alive.sum())
    return FirstPassageLaw(int(start), tgt.tolist(), q, int(horizon), residual)


def renewal_defect(P, x: int, horizon: int) -> float:
    """max_n |P_x[X_n = x] - sum_m q_m P_x[X_{n-m} = x]| for n <= horizon."""
    P = as_stochastic(P)
    law = first_passage_law(P, x, [x], horizon)
    diag = np.empty(horizon + 1)
    row = point_mass(P.n, x)
    for n in range(horizon + 1):
        diag[n] = row[x]
        row = row @ P.entries
    worst = 0.0
    for n in range(1, horizon + 1):
        conv = sum(law.probabilities[m - 1] * diag[n - m] for m in range(1, n + 1))
        worst = max(worst, abs(diag[n] - conv))
    return worst


# -- coupling ------------------------------------------------------------------

@dataclass
class CouplingReport:
    replicas: int
    tail: np.ndarray  # tail[n] = estimate of P[tau_Delta > n]
    stderr: np.ndarray
    exact_l1: np.ndarray  # ||nu P^n - pi||_1
    bound_ok: np.ndarray = field(default=None)  # exact <= 2*tail + 3*(2*stderr)

    def bound(self, n_se: float = 3.0) -> np.ndarray:
        return 2.0 * self.tail + n_se * 2.0 * self.stderr


def _sample_categorical(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (cum_rows <= u[:, None]).sum(axis=1)
    return np.minimum(idx, cum_rows.shape[1] - 1)


COUPLING_BLOCK = 8192


def coupling_diagonal_time(P, nu, pi, n_max: int, replicas: int, rng=None) -> CouplingReport:
    """Simulate the independent product chain and estimate P[tau_Delta > n].

    X_0 ~ nu and Y_0 ~ pi independently; both coordinates move with P
    independently, and tau_Delta is the first n with X_n = Y_n.
    """
    P = as_stochastic(P)
    nu = as_probability(nu, P.n)
    pi = as_probability(pi, P.n)
    stream = as_stream(rng)
    cum = np.cumsum(P.entries, axis=1)
    cum_nu = np.cumsum(nu)[None, :]
    cum_pi = np.cumsum(pi)[None, :]
    sizes = block_sizes(replicas, COUPLING_BLOCK)

    def block(b: int) -> np.ndarray:
        g = stream.substream(b).generator()
        r = sizes[b]
        x = _sample_categorical(np.repeat(cum_nu, r, axis=0), g.random(r))
        y = _sample_categorical(np.repeat(cum_pi, r, axis=0), g.random(r))
        met = x == y
        counts = np.zeros(n_max + 1)
        counts[0] = np.count_nonzero(~met)
        for n in range(1, n_max + 1):
            x = _sample_categorical(cum[x], g.random(r))
            y = _sample_categorical(cum[y], g.random(r))
            met |= x == y
            counts[n] = np.count_nonzero(~met)
        return counts

    totals = np.sum(run_blocks(block, len(sizes)), axis=0)
    tail = totals / replicas
    stderr = np.sqrt(tail * (1.0 - tail) / replicas)
    exact = np.empty(n_max + 1)
    law = nu.copy()
    for n in range(n_max + 1):
        exact[n] = np.abs(law - pi).sum()
        law = law @ P.entries
    report = CouplingReport(replicas, tail, stderr, exact)
    report.bound_ok = exact <= report.bound() + 1e-12
    return report
