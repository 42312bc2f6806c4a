"""Metropolis machinery, Monte Carlo estimators and base random generators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, log, sqrt
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    ParameterOutOfRange,
    ValidationError,
)
from .markov_core import StochasticMatrix, as_stochastic, invariant_distribution
from .models import IsingModel, ising_delta, ising_energies, ising_energy
from .rng import as_generator, as_stream, block_sizes, run_blocks


def _kernels():
    # Compiled loops load numba, which is slow to import; defer it.
    from . import _kernels as k

    return k


class DiagonalNegative(ValidationError):
    """Proposal rates are too large for the diagonal to stay nonnegative."""


class NoOppositePair(ValidationError):
    """An exchange move needs at least one + spin and one - spin."""


# -- acceptance rules -----------------------------------------------------------

@dataclass(frozen=True)
class AcceptanceRule:
    """Transition rate q * a(dH) between neighbours.

    metropolis: a = min(1, e^{-beta dH}); heatbath: a = 1 / (1 + e^{beta dH}).
    """

    kind: str = "metropolis"
    q: float = 1.0

    def __post_init__(self):
        if self.kind not in ("metropolis", "heatbath"):
            raise ValueError(f"unknown acceptance rule {self.kind!r}")
        if not self.q > 0:
            raise ParameterOutOfRange("q must be positive")

    def ratio(self, beta: float, dH):
        """a(dH) in [0, 1], without the factor q."""
        z = beta * np.asarray(dH, dtype=float)
        if self.kind == "metropolis":
            return np.exp(-np.maximum(z, 0.0))
        # 1/(1+e^z) written to avoid overflow for large |z|.
        return np.where(z > 0, np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))),
                        1.0 / (1.0 + np.exp(-np.abs(z))))

    def prob(self, beta: float, dH):
        return self.q * self.ratio(beta, dH)


def _neighbor_pairs(neighbors, n: int) -> np.ndarray:
    """Normalize a neighbour relation into an (m, 2) array of ordered pairs."""
    if isinstance(neighbors, np.ndarray) and neighbors.shape == (n, n):
        A = neighbors.astype(bool)
    else:
        A = np.zeros((n, n), dtype=bool)
        items = list(neighbors)
        if len(items) == n and all(isinstance(v, (list, tuple, set, np.ndarray)) for v in items) \
                and not all(len(v) == 2 for v in items):
            for x, ys in enumerate(items):
                A[x, list(ys)] = True
        else:
            for x, y in items:
                A[x, y] = True
    if np.any(np.diag(A)):
        raise ValidationError("neighbour relation must be irreflexive")
    if np.any(A != A.T):
        raise ValidationError("neighbour relation must be symmetric")
    return np.argwhere(A)


def metropolis_matrix(H, neighbors, beta: float, rule: AcceptanceRule) -> StochasticMatrix:
    """p_xy = q a(H(y) - H(x)) for neighbours x ~ y, diagonal completes the rows.

    Both rules satisfy detailed balance for the weights e^{-beta H}.
    """
    H = np.asarray(H, dtype=float)
    n = H.size
    pairs = _neighbor_pairs(neighbors, n)
    P = np.zeros((n, n))
    if pairs.size:
        x, y = pairs[:, 0], pairs[:, 1]
        P[x, y] = rule.prob(beta, H[y] - H[x])
    diag = 1.0 - P.sum(axis=1)
    if np.any(diag < -1e-12):
        raise DiagonalNegative(f"diagonal entry {diag.min():.3e} < 0; decrease q")
    P[np.arange(n), np.arange(n)] = np.maximum(diag, 0.0)
    return StochasticMatrix(P)


def hypercube_neighbors(N: int) -> np.ndarray:
    """Adjacency of configurations differing by one spin flip (index coding of models)."""
    idx = np.arange(2 ** N)
    A = np.zeros((2 ** N, 2 ** N), dtype=bool)
    for k in range(N):
        A[idx, idx ^ (1 << k)] = True
    return A


def glauber_matrix(model: IsingModel, rule: Optional[AcceptanceRule] = None) -> StochasticMatrix:
    """Full 2^N-state single-flip chain; rows follow the index coding of models.all_configs."""
    rule = AcceptanceRule("metropolis", model.q) if rule is None else rule
    return metropolis_matrix(ising_energies(model), hypercube_neighbors(model.N), model.beta, rule)


# -- Glauber and Kawasaki steps -----------------------------------------------

def _rule_for(model: IsingModel, rule) -> AcceptanceRule:
    if rule is None:
        return AcceptanceRule("metropolis", model.q)
    if isinstance(rule, str):
        return AcceptanceRule(rule, model.q)
    return rule


def glauber_step(model: IsingModel, x, rule=None, rng=None):
    """One single-spin-flip update.

    Site k is uniform; the flip is accepted with probability N q a(dH), so the
    one-step law is exactly glauber_matrix. Returns (new_x, accepted, dm) with
    dm = -2 x_k (old spin) when accepted.
    """
    rule = _rule_for(model, rule)
    g = as_generator(rng)
    k = int(g.integers(model.N))
    dH = ising_delta(model, x, k)
    accept = g.random() < model.N * rule.prob(model.beta, dH)
    y = np.array(x, copy=True)
    if accept:
        old = int(y[k])
        y[k] = -old
        return y, True, -2 * old
    return y, False, 0


def exchange_delta(model: IsingModel, x, i: int, j: int) -> float:
    """Energy change when spins i and j (opposite signs) are exchanged."""
    d1 = ising_delta(model, x, i)
    y = np.array(x, copy=True)
    y[i] = -y[i]
    return d1 + ising_delta(model, y, j)


def kawasaki_step(model: IsingModel, x, rule=None, rng=None, strict: bool = False):
    """Exchange a uniformly chosen pair of opposite spins, accepted with a(dH).

    Magnetization is conserved. For x with all spins equal the step is the
    identity (or NoOppositePair when ``strict``). Returns (new_x, accepted).
    """
    rule = _rule_for(model, rule)
    x = np.asarray(x)
    plus = np.nonzero(x > 0)[0]
    minus = np.nonzero(x < 0)[0]
    if plus.size == 0 or minus.size == 0:
        if strict:
            raise NoOppositePair("configuration has no pair of opposite spins")
        return np.array(x, copy=True), False
    g = as_generator(rng)
    i = int(plus[g.integers(plus.size)])
    j = int(minus[g.integers(minus.size)])
    dH = exchange_delta(model, x, i, j)
    y = np.array(x, copy=True)
    if g.random() < rule.ratio(model.beta, dH):
        y[i], y[j] = y[j], y[i]
        return y, True
    return y, False


GLAUBER_CHUNK = 1 << 20


@dataclass
class GlauberRun:
    final: np.ndarray
    magnetization: int
    counts: Optional[np.ndarray]  # visits per configuration index (N <= 20)
    mtrace: Optional[np.ndarray]
    htrace: Optional[np.ndarray]
    energy: float


def glauber_run(model: IsingModel, x0, steps: int, rule=None, rng=None,
                count_states: bool = False, trace: bool = False) -> GlauberRun:
    """Long Glauber run in compiled code; random numbers are drawn in fixed chunks."""
    rule = _rule_for(model, rule)
    g = as_generator(rng)
    spins = np.array(x0, dtype=np.int64, copy=True)
    counts = np.zeros(2 ** model.N if count_states else 0, dtype=np.int64)
    mtrace = np.zeros(steps if trace else 0, dtype=np.int64)
    htrace = np.zeros(steps if trace else 0)
    energy = ising_energy(model, spins)
    if count_states and model.N > 20:
        raise ParameterOutOfRange("state counting needs N <= 20")
    done = 0
    m = int(spins.sum())
    scale = model.N * rule.q
    while done < steps:
        k = min(GLAUBER_CHUNK, steps - done)
        ks = g.integers(0, model.N, size=k)
        us = g.random(k)
        msub = mtrace[done:done + k] if trace else mtrace
        hsub = htrace[done:done + k] if trace else htrace
        m, energy = _kernels().glauber_sweep(spins, float(model.beta), float(model.h), scale,
                                  rule.kind == "heatbath", ks, us, counts, msub, hsub, energy)
        done += k
    return GlauberRun(spins, int(m), counts if count_states else None,
                      mtrace if trace else None, htrace if trace else None, float(energy))


# -- finite chain simulation ------------------------------------------------------

def _cumulative(P: StochasticMatrix) -> np.ndarray:
    cum = np.cumsum(P.entries, axis=1)
    cum[:, -1] = 1.0
    return cum


def simulate_chain(P, x0: int, steps: int, rng=None) -> np.ndarray:
    """Path X_1..X_steps of the finite chain started at x0."""
    P = as_stochastic(P)
    g = as_generator(rng)
    out = np.empty(steps, dtype=np.int64)
    if steps:
        _kernels().chain_path(_cumulative(P), int(x0), g.random(steps), out)
    return out


# -- estimators -----------------------------------------------------------------

@dataclass
class EstimatorReport:
    n: int
    mean: float
    variance_estimate: float
    variance_bound: Optional[float]
    ci_halfwidth: float
    planner: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "mean": float(self.mean),
            "var_est": float(self.variance_estimate),
            "var_bound": None if self.variance_bound is None else float(self.variance_bound),
            "ci": float(self.ci_halfwidth),
            "n_required": self.planner.get("n_required"),
        }


def batch_means_variance(values: np.ndarray, batches: int = 16) -> float:
    """Estimate Var(mean of values) from the spread of `batches` batch means."""
    n = values.size
    b = min(batches, n)
    if b < 2:
        return 0.0
    size = n // b
    means = values[: size * b].reshape(b, size).mean(axis=1)
    return float(means.var(ddof=1) / b)


def mcmc_variance_bound(n: int, rho: float, var_pi: float) -> float:
    """(1/n) (1 + rho)/(1 - rho) Var^pi(Y) for a chain started from pi."""
    return (1.0 + rho) / (1.0 - rho) * var_pi / n


def mcmc_estimate(chainstep, Y, n: int, burn_in: int = 0, rng=None, x0=0, init=None,
                  rho: Optional[float] = None, var_pi: Optional[float] = None,
                  batches: int = 16, eps: float = 1e-3,
                  delta: Optional[float] = None) -> EstimatorReport:
    """S_n = (1/n) sum_m Y(X_m) over n states after `burn_in` steps.

    ``chainstep`` is a stochastic matrix (compiled path, Y a vector over
    states) or a callable (x, generator) -> next state with Y a callable.
    ``init``, a probability vector, draws X_0 instead of using x0. With rho
    the stationary variance bound is reported; var_pi defaults to Var^pi(Y)
    when the matrix is available. The halfwidth comes from Chebychev's
    inequality at failure probability eps.
    """
    if n < 1:
        raise ParameterOutOfRange("n must be >= 1")
    g = as_generator(rng)
    if isinstance(chainstep, (StochasticMatrix, np.ndarray)):
        P = as_stochastic(chainstep)
        y = np.asarray(Y, dtype=float)
        if y.shape != (P.n,):
            raise DimensionMismatch("observable length differs from state count")
        if init is not None:
            start = int(np.searchsorted(np.cumsum(init), g.random(), side="right"))
            start = min(start, P.n - 1)
        else:
            start = int(x0)
        path = np.empty(burn_in + n, dtype=np.int64)
        path[0] = start
        if burn_in + n > 1:
            _kernels().chain_path(_cumulative(P), start, g.random(burn_in + n - 1), path[1:])
        values = y[path[burn_in:]]
        if rho is not None and var_pi is None:
            pi = invariant_distribution(P)
            var_pi = float(pi @ y ** 2 - (pi @ y) ** 2)
    else:
        x = x0
        for _ in range(burn_in):
            x = chainstep(x, g)
        values = np.empty(n)
        for m in range(n):
            values[m] = Y(x)
            x = chainstep(x, g)
    mean = float(values.mean())
    var_est = batch_means_variance(values - mean, batches)
    bound = None
    if rho is not None and var_pi is not None:
        bound = mcmc_variance_bound(n, rho, var_pi)
    spread = bound if bound is not None else var_est
    planner = {}
    if delta is not None and var_pi is not None:
        planner = {"delta": delta, "eps": eps, "n_required": plan_samples(delta, eps, var_pi, rho)}
    return EstimatorReport(n, mean, var_est, bound, sqrt(spread / eps), planner)


def _exact(x) -> Fraction:
    return Fraction(x).limit_denominator(10 ** 15)


def plan_samples(delta: float, eps: float, var_bound: float = 1.0,
                 rho: Optional[float] = None) -> int:
    """Smallest n with var_bound / (n delta^2) <= eps, times (1+rho)/(1-rho) if rho given.

    Computed in exact rational arithmetic on the decimal inputs, so that
    round numbers give round answers.
    """
    if not 0.0 < delta <= 1.0:
        raise ParameterOutOfRange("delta must lie in (0, 1]")
    if not 0.0 < eps < 1.0:
        raise ParameterOutOfRange("eps must lie in (0, 1)")
    if var_bound < 0:
        raise ParameterOutOfRange("var_bound must be >= 0")
    n = _exact(var_bound) / (_exact(delta) ** 2 * _exact(eps))
    if rho is not None:
        if not 0.0 <= rho < 1.0:
            raise ParameterOutOfRange("rho must lie in [0, 1)")
        r = _exact(rho)
        n *= (1 + r) / (1 - r)
    return int(ceil(n))


def plan_samples_clt(delta: float, eps: float, var_bound: float = 1.0) -> int:
    """Heuristic n = ceil(2 var_bound log(1/eps) / delta^2) from a normal approximation.

    Not a guarantee; use plan_samples for a rigorous count.
    """
    if not 0.0 < delta <= 1.0 or not 0.0 < eps < 1.0:
        raise ParameterOutOfRange("delta must lie in (0, 1] and eps in (0, 1)")
    return int(ceil(2.0 * var_bound * log(1.0 / eps) / delta ** 2))


# -- hit-or-miss volume -------------------------------------------------------------

Inequality = Callable[[np.ndarray], np.ndarray]


def affine(a: Sequence[float], b: float) -> Inequality:
    a = np.asarray(a, dtype=float)
    return lambda X: X @ a + b


def ball(center: Sequence[float], radius: float) -> Inequality:
    c = np.asarray(center, dtype=float)
    return lambda X: radius ** 2 - np.sum((X - c) ** 2, axis=1)


def parse_inequalities(spec) -> list[Inequality]:
    """Build inequalities from JSON text or parsed objects.

    {"type": "affine", "a": [...], "b": r} means a.x + b >= 0 and
    {"type": "ball", "center": [...], "radius": r} means r^2 - |x - c|^2 >= 0.
    """
    if isinstance(spec, (str, bytes)):
        spec = json.loads(spec)
    out = []
    for item in spec:
        kind = item.get("type")
        if kind == "affine":
            out.append(affine(item["a"], float(item["b"])))
        elif kind == "ball":
            out.append(ball(item["center"], float(item["radius"])))
        else:
            raise ValidationError(f"unknown inequality type {kind!r}")
    return out


VOLUME_BLOCK = 1 << 16


def mc_volume(dim: int, inequalities: Sequence[Inequality], n: int, rng=None,
              eps: float = 1e-3, delta: Optional[float] = None) -> EstimatorReport:
    """Hit-or-miss estimate of |{x in [0,1]^dim : f_i(x) >= 0 for all i}|.

    The halfwidth sqrt(1/(4 n eps)) uses Var(1_V) <= 1/4 and holds with
    probability at least 1 - eps.
    """
    if n < 1 or dim < 1:
        raise ParameterOutOfRange("dim and n must be >= 1")
    stream = as_stream(rng)
    sizes = block_sizes(n, VOLUME_BLOCK)

    def block(b: int) -> int:
        X = stream.substream(b).generator().random((sizes[b], dim))
        inside = np.ones(sizes[b], dtype=bool)
        for f in inequalities:
            inside &= f(X) >= 0
        return int(np.count_nonzero(inside))

    hits = sum(run_blocks(block, len(sizes)))
    p = hits / n
    var_est = p * (1.0 - p) / n
    bound = 0.25 / n
    planner = {}
    if delta is not None:
        planner = {"delta": delta, "eps": eps, "n_required": plan_samples(delta, eps, 0.25)}
    return EstimatorReport(n, p, var_est, bound, sqrt(bound / eps), planner)


# -- base generators -----------------------------------------------------------------

def sample_exponential(lam: float, rng=None, u: Optional[float] = None) -> float:
    """Inverse-CDF draw -log(1 - U)/lam from a single uniform."""
    if not lam > 0:
        raise ParameterOutOfRange("lambda must be positive")
    if u is None:
        u = as_generator(rng).random()
    return -log(1.0 - u) / lam


def sample_exponentials(lam: float, size: int, rng=None) -> np.ndarray:
    if not lam > 0:
        raise ParameterOutOfRange("lambda must be positive")
    return -np.log1p(-as_generator(rng).random(size)) / lam


def sample_normal_pair(rng=None, u: Optional[float] = None, v: Optional[float] = None):
    """Box-Muller: R = sqrt(-2 log(1-U)), Phi = 2 pi V, return (R cos Phi, R sin Phi)."""
    if u is None or v is None:
        g = as_generator(rng)
        u, v = g.random(2)
    r = sqrt(-2.0 * log(1.0 - u))
    phi = 2.0 * np.pi * v
    return r * np.cos(phi), r * np.sin(phi)


def sample_normal_pairs(size: int, rng=None) -> np.ndarray:
    """(size, 2) array of Box-Muller pairs from 2*size uniforms."""
    U = as_generator(rng).random((size, 2))
    r = np.sqrt(-2.0 * np.log1p(-U[:, 0]))
    phi = 2.0 * np.pi * U[:, 1]
    return np.column_stack((r * np.cos(phi), r * np.sin(phi)))


def empirical_l1(counts: np.ndarray, law: np.ndarray) -> float:
    """l1 (total variation) distance between visit frequencies and a law."""
    freq = counts / counts.sum()
    return float(np.abs(freq - law).sum())
