"""Chains on an interval of the real line with a transition density.

Kernels are discretized on a uniform grid with trapezoid weights, which
keeps every entry nonnegative so the discretized chain is stochastic after
row renormalization. The AR(1) model ``X_{n+1} = a X_n + sigma xi`` is
treated in closed form and on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import erf, sqrt
from typing import Callable, Optional

import numpy as np

from .errors import (
    NotContracting,
    ParameterOutOfRange,
    SeriesDiverges,
    TailMassTooLarge,
    ValidationError,
)
from .lyapunov import DriftCertificate, MinorizationCertificate, check_drift, find_minorization
from .markov_core import StochasticMatrix, invariant_distribution
from .rng import as_stream, block_sizes, run_blocks

TAIL_TOL = 1e-6


@dataclass
class DensityKernel:
    """Transition density p(x, y) with a matching sampler.

    ``density`` must broadcast over array arguments; ``sampler(x, g)`` maps
    an array of current states to an array of next states.
    """

    density: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sampler: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    name: str = "kernel"
    params: dict = field(default_factory=dict)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + erf(z / sqrt(2.0)))


def _gauss(z, sigma):
    return np.exp(-0.5 * (z / sigma) ** 2) / (sqrt(2.0 * np.pi) * sigma)


@dataclass(frozen=True)
class Ar1Model:
    a: float
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterOutOfRange("sigma must be positive")

    def require_contracting(self):
        if not abs(self.a) < 1:
            raise NotContracting(f"|a| = {abs(self.a)!r} >= 1")

    def kernel(self) -> DensityKernel:
        a, s = self.a, self.sigma
        return DensityKernel(
            density=lambda x, y: _gauss(y - a * x, s),
            sampler=lambda x, g: a * x + s * g.standard_normal(np.shape(x)),
            name="ar1",
            params={"a": a, "sigma": s},
        )

    def invariant_std(self) -> float:
        self.require_contracting()
        return self.sigma / sqrt(1.0 - self.a ** 2)

    def default_halfwidth(self) -> float:
        return 8.0 * self.invariant_std()


def gaussian_walk(sigma: float = 1.0) -> DensityKernel:
    """X_{n+1} = X_n + sigma xi: null recurrent, no invariant probability."""
    return DensityKernel(
        density=lambda x, y: _gauss(y - x, sigma),
        sampler=lambda x, g: x + sigma * g.standard_normal(np.shape(x)),
        name="gaussian-walk",
        params={"sigma": sigma},
    )


NOISY_MAPS = {
    "logistic": lambda r: (lambda x: r * x * (1.0 - x)),
    "tent": lambda r: (lambda x: r * np.minimum(x, 1.0 - x)),
    "linear": lambda r: (lambda x: r * x),
}


def noisy_map(kind: str = "logistic", r: float = 3.7, sigma: float = 0.1) -> DensityKernel:
    """X_{n+1} = F(X_n) + sigma xi for a fixed map F."""
    if kind not in NOISY_MAPS:
        raise ValidationError(f"unknown map {kind!r}")
    F = NOISY_MAPS[kind](r)
    return DensityKernel(
        density=lambda x, y: _gauss(y - F(x), sigma),
        sampler=lambda x, g: F(x) + sigma * g.standard_normal(np.shape(x)),
        name="noisy-map",
        params={"map": kind, "r": r, "sigma": sigma},
    )


def iid_kernel(density: Callable[[np.ndarray], np.ndarray], sampler) -> DensityKernel:
    return DensityKernel(
        density=lambda x, y: density(y) + 0.0 * x,
        sampler=lambda x, g: sampler(np.shape(x), g),
        name="iid",
    )


def parse_kernel(spec: str) -> DensityKernel:
    """Parse presets such as "ar1:a=0.5,sigma=1", "gaussian-walk:sigma=1",
    "noisy-map:logistic,r=3.7,sigma=0.1"."""
    name, _, rest = spec.partition(":")
    params: dict = {}
    flags = []
    for part in filter(None, (p.strip() for p in rest.split(","))):
        if "=" in part:
            k, v = part.split("=", 1)
            try:
                params[k.strip()] = float(v)
            except ValueError as exc:
                raise ValidationError(f"bad number in kernel spec: {part!r}") from exc
        else:
            flags.append(part)
    try:
        if name == "ar1":
            return Ar1Model(params.get("a", 0.5), params.get("sigma", 1.0)).kernel()
        if name == "gaussian-walk":
            return gaussian_walk(params.get("sigma", 1.0))
        if name == "noisy-map":
            kind = flags[0] if flags else "logistic"
            return noisy_map(kind, params.get("r", 3.7), params.get("sigma", 0.1))
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc
    raise ValidationError(f"unknown kernel preset {name!r}")


# -- discretization ------------------------------------------------------------------

@dataclass
class GridChain:
    nodes: np.ndarray
    weights: np.ndarray
    matrix: StochasticMatrix
    defects: np.ndarray  # |1 - row integral| before renormalization
    L: float

    @property
    def M(self) -> int:
        return self.nodes.size

    def core(self, halfwidth: Optional[float] = None) -> np.ndarray:
        hw = self.L / 2.0 if halfwidth is None else halfwidth
        return np.abs(self.nodes) <= hw + 1e-12

    def indices(self, lo: float, hi: float) -> np.ndarray:
        return np.nonzero((self.nodes >= lo - 1e-12) & (self.nodes <= hi + 1e-12))[0]

    def to_density(self, row: np.ndarray) -> np.ndarray:
        return row / self.weights


def trapezoid_grid(L: float, M: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(-L, L, M)
    h = nodes[1] - nodes[0]
    w = np.full(M, h)
    w[0] = w[-1] = h / 2.0
    return nodes, w


def discretize(kernel: DensityKernel, L: float, M: int, tail_tol: float = TAIL_TOL,
               check_halfwidth: Optional[float] = None) -> GridChain:
    """Trapezoid discretization p_ij = p(x_i, x_j) w_j on M nodes of [-L, L].

    The row defect |1 - sum_j p_ij| is recorded; rows with |x_i| within
    ``check_halfwidth`` (default L/2) must lose at most ``tail_tol``. Edge
    rows of a kernel with unbounded support necessarily lose more mass.
    """
    if M < 16:
        raise ParameterOutOfRange("M must be >= 16")
    if not L > 0:
        raise ParameterOutOfRange("L must be positive")
    nodes, w = trapezoid_grid(L, M)
    raw = kernel.density(nodes[:, None], nodes[None, :]) * w[None, :]
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise ValidationError("kernel density is negative or non-finite on the grid")
    sums = raw.sum(axis=1)
    defects = np.abs(1.0 - sums)
    hw = L / 2.0 if check_halfwidth is None else check_halfwidth
    checked = np.nonzero(np.abs(nodes) <= hw + 1e-12)[0]
    if checked.size:
        worst = checked[np.argmax(defects[checked])]
        if defects[worst] > tail_tol:
            raise TailMassTooLarge(int(worst), float(defects[worst]))
    if np.any(sums <= 0):
        raise TailMassTooLarge(int(np.argmin(sums)), 1.0)
    P = raw / sums[:, None]
    return GridChain(nodes, w, StochasticMatrix(P), defects, float(L))


def nstep_density(chain: GridChain, x: int, n: int) -> np.ndarray:
    """Density of X_n given X_0 = nodes[x], on the nodes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    row = np.zeros(chain.M)
    row[x] = 1.0
    A = chain.matrix.entries
    for _ in range(n):
        row = row @ A
    return chain.to_density(row)


def grid_integral(chain: GridChain, density: np.ndarray) -> float:
    return float(density @ chain.weights)


# -- killed and potential kernels ---------------------------------------------------------

def _set_indices(chain: GridChain, B) -> np.ndarray:
    if isinstance(B, tuple) and len(B) == 2 and not isinstance(B[0], (int, np.integer)):
        idx = chain.indices(*B)
    else:
        idx = np.unique(np.asarray(B, dtype=int))
    if idx.size == 0:
        raise ValidationError("B contains no grid node")
    return idx


def killed_matrix(chain: GridChain, B) -> np.ndarray:
    """p-dagger: transitions into B removed (columns of B set to zero)."""
    K = np.array(chain.matrix.entries, copy=True)
    K[:, _set_indices(chain, B)] = 0.0
    return K


def killed_kernel_powers(chain: GridChain, B, n_max: int) -> list[np.ndarray]:
    """[(p-dagger)^1, ..., (p-dagger)^n_max]; row sums are P_x[tau_B > n]."""
    K = killed_matrix(chain, B)
    out = [K]
    for _ in range(n_max - 1):
        out.append(out[-1] @ K)
    return out


def survival(chain: GridChain, B, x: int, n_max: int) -> np.ndarray:
    """P_x[tau_B > n] for n = 1..n_max, with tau_B = inf{n >= 1: X_n in B}."""
    K = killed_matrix(chain, B)
    row = np.zeros(chain.M)
    row[x] = 1.0
    out = np.empty(n_max)
    for n in range(n_max):
        row = row @ K
        out[n] = row.sum()
    return out


def potential_kernel(chain: GridChain, B, tol: float = 1e-10, max_doublings: int = 60) -> np.ndarray:
    """g_B = sum_{n >= 1} (p-dagger)^n, summed by doubling.

    Convergence needs the killed matrix to have spectral radius below 1; this
    is certified by finding some power with sup-norm below 1.
    """
    K = killed_matrix(chain, B)
    Km = K.copy()
    for _ in range(max_doublings):
        if np.max(Km.sum(axis=1)) < 1.0:
            break
        Km = Km @ Km
    else:
        raise SeriesDiverges("killed kernel has spectral radius 1 (B is not reached)")
    S = K.copy()
    Km = K.copy()
    for _ in range(max_doublings):
        inc = Km @ S
        S += inc
        if np.max(np.abs(inc).sum(axis=1)) < tol:
            return S
        Km = Km @ Km
    raise SeriesDiverges("Neumann series did not reach the tolerance")


def mean_hitting_time_grid(chain: GridChain, B, g: Optional[np.ndarray] = None) -> np.ndarray:
    """E_x[tau_B] = 1 + sum_y g_B(x, y) for every node x."""
    g = potential_kernel(chain, B) if g is None else g
    return 1.0 + g.sum(axis=1)


def nummelin_check(chain: GridChain, B, f: np.ndarray) -> tuple[float, float]:
    """(pi(f), sum_{x in B} pi(x) [f(x) + (g_B f)(x)]) on the grid chain."""
    idx = _set_indices(chain, B)
    pi = invariant_distribution(chain.matrix)
    g = potential_kernel(chain, idx)
    f = np.asarray(f, dtype=float)
    local = f[idx] + (g[idx] @ f)
    return float(pi @ f), float(pi[idx] @ local)


# -- AR(1) ----------------------------------------------------------------------------------

def ar1_grid(model: Ar1Model, M: int = 513, L: Optional[float] = None) -> GridChain:
    model.require_contracting()
    L = model.default_halfwidth() if L is None else L
    return discretize(model.kernel(), L, M)


def ar1_drift(model: Ar1Model, grid: Optional[GridChain] = None) -> DriftCertificate:
    """V(x) = x^2 gives LV(x) = -(1 - a^2) x^2 + sigma^2: c = 1 - a^2, d = sigma^2."""
    model.require_contracting()
    V = grid.nodes ** 2 if grid is not None else np.zeros(0)
    return DriftCertificate(V, 1.0 - model.a ** 2, model.sigma ** 2, "geometric")


def ar1_generator_error(model: Ar1Model, grid: GridChain) -> float:
    """sup over |x| <= L/2 of |(LV)(x) on the grid - (-(1-a^2) x^2 + sigma^2)|."""
    V = grid.nodes ** 2
    LV = grid.matrix.entries @ V - V
    exact = -(1.0 - model.a ** 2) * V + model.sigma ** 2
    core = grid.core()
    return float(np.max(np.abs(LV - exact)[core]))


def ar1_grid_drift(model: Ar1Model, grid: GridChain) -> DriftCertificate:
    """Drift certificate valid for the grid chain itself.

    c is kept at 1 - a^2 and d is the smallest constant making the
    inequality hold at every node (sigma^2 up to quadrature error).
    """
    model.require_contracting()
    V = grid.nodes ** 2
    c = 1.0 - model.a ** 2
    LV = grid.matrix.entries @ V - V
    d = max(model.sigma ** 2, float(np.max(LV + c * V)))
    return check_drift(grid.matrix, V, c, d)


@dataclass
class Ar1Minorization:
    """p(x, y) >= alpha nu(y) for x in K = [-sqrt R, sqrt R]."""

    R: float
    alpha: float
    alpha_closed_form: float
    a: float
    sigma: float

    @property
    def K(self) -> tuple[float, float]:
        r = sqrt(self.R)
        return (-r, r)

    def floor(self, y):
        """Unnormalized alpha nu(y) = phi_sigma(|y| + |a| sqrt R) on |y| <= sqrt R."""
        r = sqrt(self.R)
        y = np.asarray(y, dtype=float)
        return np.where(np.abs(y) <= r, _gauss(np.abs(y) + abs(self.a) * r, self.sigma), 0.0)

    def nu(self, y):
        return self.floor(y) / self.alpha

    def verify_on_grid(self, M: int = 513) -> float:
        """min over grid points of inf_{x in K} p(x, y) - alpha nu(y) (should be >= -1e-12)."""
        r = sqrt(self.R)
        xs = np.linspace(-r, r, M)
        ys = np.linspace(-r, r, M)
        inf_p = _gauss(ys[None, :] - self.a * xs[:, None], self.sigma).min(axis=0)
        return float(np.min(inf_p - self.floor(ys)))


def ar1_minorization(model: Ar1Model, R: Optional[float] = None) -> Ar1Minorization:
    """Minorization on K = [-sqrt R, sqrt R] with alpha from quadrature.

    The closed form 2 (Phi((1 + |a|) sqrt(R)/sigma) - Phi(|a| sqrt(R)/sigma))
    is kept alongside as a check.
    """
    model.require_contracting()
    c = 1.0 - model.a ** 2
    lower = 2.0 * model.sigma ** 2 / c
    R = 4.0 * model.sigma ** 2 / c if R is None else float(R)
    if not R > lower:
        raise ParameterOutOfRange(f"R = {R!r} must exceed 2 sigma^2/(1 - a^2) = {lower!r}")
    r = sqrt(R)
    shift = abs(model.a) * r
    from scipy import integrate

    half, _ = integrate.quad(lambda y: float(_gauss(y + shift, model.sigma)), 0.0, r,
                             epsabs=1e-14, epsrel=1e-12)
    alpha = 2.0 * half
    closed = 2.0 * (_norm_cdf((r + shift) / model.sigma) - _norm_cdf(shift / model.sigma))
    return Ar1Minorization(R, alpha, float(closed), model.a, model.sigma)


def ar1_grid_minorization(model: Ar1Model, grid: GridChain, drift: DriftCertificate,
                          R: Optional[float] = None) -> MinorizationCertificate:
    c = 1.0 - model.a ** 2
    R = 4.0 * model.sigma ** 2 / c if R is None else float(R)
    return find_minorization(grid.matrix, drift, R)


@dataclass
class GaussianLaw:
    mean: float
    variance: float

    def pdf(self, x):
        return _gauss(np.asarray(x, dtype=float) - self.mean, sqrt(self.variance))


def ar1_invariant(model: Ar1Model) -> GaussianLaw:
    model.require_contracting()
    return GaussianLaw(0.0, model.sigma ** 2 / (1.0 - model.a ** 2))


def ar1_nstep_law(model: Ar1Model, x: float, n: int) -> GaussianLaw:
    a2 = model.a ** 2
    var = model.sigma ** 2 * (n if a2 == 1.0 else (1.0 - a2 ** n) / (1.0 - a2))
    return GaussianLaw(model.a ** n * x, var)


def grid_invariant_density(grid: GridChain) -> np.ndarray:
    return grid.to_density(invariant_distribution(grid.matrix))


def ar1_simulate(model: Ar1Model, n: int, x0: Optional[float] = None, rng=None) -> np.ndarray:
    """X_1..X_n; X_0 defaults to a draw from the invariant law when |a| < 1."""
    g = as_stream(rng).generator()
    if x0 is None:
        x0 = g.standard_normal() * model.invariant_std()
    e = model.sigma * g.standard_normal(n)
    from scipy import signal

    y, _ = signal.lfilter([1.0], [1.0, -model.a], e, zi=[model.a * x0])
    return y


# -- Harris diagnostics ---------------------------------------------------------------------

@dataclass
class HarrisReport:
    hit_fraction: float
    mean_hitting_estimate: float  # mean of min(tau_A, cap)
    censored: bool
    censored_fraction: float
    cap: int
    replicas: int


HARRIS_BLOCK = 4096


def _first_entry(kernel: DensityKernel, x0: float, A, cap: int, replicas: int, rng):
    """(tau_A capped at cap, missed flag) per replica, in replica order."""
    lo, hi = A
    stream = as_stream(rng)
    sizes = block_sizes(replicas, HARRIS_BLOCK)

    def block(b: int) -> np.ndarray:
        g = stream.substream(b).generator()
        x = np.full(sizes[b], float(x0))
        tau = np.full(sizes[b], cap, dtype=np.int64)
        active = np.ones(sizes[b], dtype=bool)
        for n in range(1, cap + 1):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            x[idx] = kernel.sampler(x[idx], g)
            hit = idx[(x[idx] >= lo) & (x[idx] <= hi)]
            tau[hit] = n
            active[hit] = False
        return np.column_stack((tau, active))

    res = np.concatenate(run_blocks(block, len(sizes)))
    return res[:, 0], res[:, 1].astype(bool)


def harris_diagnostics(kernel: DensityKernel, x0: float, A: tuple[float, float], cap: int,
                       replicas: int, rng=None) -> HarrisReport:
    """Simulate until the chain enters A (from step 1 on) or `cap` steps pass.

    Censored replicas are flagged, never extrapolated.
    """
    if cap < 1:
        raise ParameterOutOfRange("cap must be >= 1")
    tau, missed = _first_entry(kernel, x0, A, cap, replicas, rng)
    frac_missed = float(missed.mean())
    return HarrisReport(
        hit_fraction=1.0 - frac_missed,
        mean_hitting_estimate=float(tau.mean()),
        censored=bool(missed.any()),
        censored_fraction=frac_missed,
        cap=int(cap),
        replicas=int(replicas),
    )


def simulate_hitting_times(kernel: DensityKernel, x0: float, B: tuple[float, float],
                           replicas: int, cap: int = 100000, rng=None) -> np.ndarray:
    """tau_B samples (censored at cap) for comparison with grid potentials."""
    return _first_entry(kernel, x0, B, cap, replicas, rng)[0]
