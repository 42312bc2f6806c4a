"""Drift conditions, minorization and explicit geometric-ergodicity constants.

The contraction constants follow the Hairer-Mattingly construction: for a
geometric drift ``P V <= (1 - c) V + d`` and a minorization
``p(x, .) >= alpha nu(.)`` on ``K = {V < R}`` with ``R > 2 d / c`` the
one-step map is a strict contraction for the weighted distance
``rho_beta(mu, nu) = sum_x (1 + beta V(x)) |mu(x) - nu(x)|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    AlphaZero,
    CertificateInvalid,
    DimensionMismatch,
    EmptyK,
    NoValidDrift,
    ParameterOutOfRange,
)
from .markov_core import as_stochastic, invariant_distribution
from .rng import as_generator

DRIFT_TOL = 1e-9
D_FLOOR = 1e-12
DRIFT_KINDS = ("geometric", "bounded", "setwise")


def _as_v(V, n: Optional[int] = None) -> np.ndarray:
    v = np.asarray(V, dtype=float)
    if v.ndim != 1 or (n is not None and v.shape[0] != n):
        raise DimensionMismatch(f"Lyapunov function has shape {v.shape}, expected ({n},)")
    if np.any(v < 0):
        raise ValueError("Lyapunov function must be nonnegative")
    return v


def generator_apply(P, V) -> np.ndarray:
    """(LV)(x) = sum_y p_xy (V(y) - V(x)) = (PV)(x) - V(x)."""
    P = as_stochastic(P)
    v = np.asarray(V, dtype=float)
    if v.shape != (P.n,):
        raise DimensionMismatch(f"function has shape {v.shape}, expected ({P.n},)")
    return P.entries @ v - v


def dynkin_audit(P, V, x: int, n: int) -> tuple[float, float, float]:
    """Return (E_x V(X_n), V(x) + sum_{m<n} E_x (LV)(X_m), |difference|)."""
    P = as_stochastic(P)
    v = np.asarray(V, dtype=float)
    LV = generator_apply(P, v)
    row = np.zeros(P.n)
    row[x] = 1.0
    rhs = v[x]
    for _ in range(int(n)):
        rhs += row @ LV
        row = row @ P.entries
    lhs = row @ v
    return float(lhs), float(rhs), float(abs(lhs - rhs))


# -- drift certificates -----------------------------------------------------

@dataclass
class DriftCertificate:
    V: np.ndarray
    c: float
    d: float
    kind: str = "geometric"
    K: Optional[np.ndarray] = None  # indicator set for the setwise form
    f: Optional[np.ndarray] = None  # test function for the setwise form
    max_violation: float = 0.0

    @property
    def gamma(self) -> float:
        return 1.0 - self.c

    def rhs(self) -> np.ndarray:
        if self.kind == "geometric":
            return -self.c * self.V + self.d
        if self.kind == "bounded":
            return self.c * self.V + self.d
        ind = np.zeros_like(self.V)
        if self.K is not None:
            ind[np.asarray(self.K, dtype=int)] = 1.0
        f = self.V if self.f is None else self.f
        return -self.c * f + self.d * ind

    def violation(self, P) -> float:
        """Largest positive excess of LV over the declared right-hand side."""
        return float(max(0.0, np.max(generator_apply(P, self.V) - self.rhs())))

    def to_dict(self) -> dict:
        return {"c": float(self.c), "d": float(self.d), "kind": self.kind}


def check_drift(P, V, c: float, d: float, kind: str = "geometric", K=None, f=None,
                tol: float = DRIFT_TOL) -> DriftCertificate:
    """Verify a declared drift inequality at every state and return its certificate."""
    P = as_stochastic(P)
    if kind not in DRIFT_KINDS:
        raise ValueError(f"unknown drift kind {kind!r}")
    if not c > 0 or d < 0:
        raise CertificateInvalid(f"need c > 0 and d >= 0, got c={c!r}, d={d!r}")
    cert = DriftCertificate(_as_v(V, P.n), float(c), float(d), kind, K, f)
    excess = cert.violation(P)
    if excess > tol:
        raise CertificateInvalid(f"drift inequality violated by {excess:.3e}")
    cert.max_violation = excess
    return cert


def fit_geometric_drift(P, V, quantile: float = 0.05) -> DriftCertificate:
    """Fit (c, d) with LV <= -c V + d, exact at every state.

    d is pinned to the largest LV over the core: the ``quantile`` fraction
    of states with the smallest V together with every zero of V. c is then
    the largest value compatible with d on states where V > 0, capped at 1.
    If that c is not positive, c is chosen instead to minimise d/c with
    d = max(LV + c V), which is convex in 1/c.
    """
    P = as_stochastic(P)
    v = _as_v(V, P.n)
    r = generator_apply(P, v)
    pos = v > 0
    if not np.any(pos):
        raise NoValidDrift("V vanishes identically")
    k = max(1, int(np.ceil(quantile * P.n)))
    core = np.zeros(P.n, dtype=bool)
    core[np.argsort(v, kind="stable")[:k]] = True
    core |= v == 0
    d = max(0.0, float(np.max(r[core])))
    c = min(1.0, float(np.min((d - r[pos]) / v[pos])))
    if c > 0:
        return check_drift(P, v, c, d, "geometric")
    if not np.any(r < 0):
        raise NoValidDrift(f"fitted c = {c!r} is not positive and LV is nowhere negative")
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(lambda t: float(np.max(r * t + v)), bounds=(1.0, 1e12),
                          method="bounded", options={"xatol": 1e-10})
    c = 1.0 / float(res.x)
    d = max(0.0, float(np.max(r + c * v)))
    try:
        return check_drift(P, v, c, d, "geometric")
    except CertificateInvalid as exc:
        raise NoValidDrift(str(exc)) from exc


def subexponential_bound(P, cert: DriftCertificate, x: int, n: int) -> float:
    """(1+c)^n V(x) + ((1+c)^n - 1) d / c, valid under LV <= c V + d."""
    if cert.kind != "bounded":
        raise CertificateInvalid("sub-exponential growth needs a bounded-kind certificate")
    if cert.violation(P) > DRIFT_TOL:
        raise CertificateInvalid("drift inequality does not hold for this chain")
    g = (1.0 + cert.c) ** n
    return float(g * cert.V[x] + (g - 1.0) * cert.d / cert.c)


def accelerate_drift(cert: DriftCertificate, T: int, P=None) -> DriftCertificate:
    """Drift constants of the T-step chain: c_T = 1 - (1-c)^T, d_T = c_T d / c.

    When P is given the new inequality is verified on P^T.
    """
    if cert.kind != "geometric":
        raise CertificateInvalid("only geometric drift can be accelerated")
    if T < 1:
        raise ValueError("T must be >= 1")
    cT = 1.0 - (1.0 - cert.c) ** int(T)
    dT = cT * cert.d / cert.c
    out = DriftCertificate(cert.V, cT, dT, "geometric")
    if P is not None:
        out.max_violation = out.violation(as_stochastic(P).power(T))
        if out.max_violation > DRIFT_TOL * max(1.0, float(np.max(cert.V))):
            raise CertificateInvalid(f"accelerated drift violated by {out.max_violation:.3e}")
    return out


# -- minorization -------------------------------------------------------------

@dataclass
class MinorizationCertificate:
    R: float
    K: np.ndarray  # state indices with V < R
    alpha: float
    nu: np.ndarray

    def to_dict(self) -> dict:
        return {
            "R": float(self.R),
            "K_indices": [int(i) for i in self.K],
            "alpha": float(self.alpha),
            "nu": self.nu.tolist(),
        }


def find_minorization(P, cert: DriftCertificate, R: float) -> MinorizationCertificate:
    """Best minorization on K = {V < R}: nu~(y) = min_{x in K} p_xy, alpha = sum nu~."""
    P = as_stochastic(P)
    if not R > 2.0 * cert.d / cert.c:
        raise ParameterOutOfRange(f"R = {R!r} must exceed 2d/c = {2 * cert.d / cert.c!r}")
    K = np.nonzero(cert.V < R)[0]
    if K.size == 0:
        raise EmptyK(f"no state has V < {R!r}")
    floor = P.entries[K].min(axis=0)
    alpha = float(floor.sum())
    if not alpha > 0:
        raise AlphaZero(
            "alpha = 0 because the rows of K have disjoint supports; increase --T "
            "(accelerate the chain), or add laziness if the chain is periodic"
        )
    return MinorizationCertificate(float(R), K, min(alpha, 1.0), floor / floor.sum())


# -- explicit constants -------------------------------------------------------

@dataclass
class ConvergenceCertificate:
    alpha0: float
    gamma0: float
    beta: float
    gamma_bar: float
    M_bound: float

    def to_dict(self) -> dict:
        return {
            "alpha0": self.alpha0,
            "gamma0": self.gamma0,
            "beta": self.beta,
            "gamma_bar": self.gamma_bar,
            "M_bound": self.M_bound,
        }


def gamma0_interval(drift: DriftCertificate, minor: MinorizationCertificate) -> tuple[float, float]:
    return drift.gamma + 2.0 * drift.d / minor.R, 1.0


def hairer_mattingly_constants(drift: DriftCertificate, minor: MinorizationCertificate,
                               alpha0: Optional[float] = None,
                               gamma0: Optional[float] = None) -> ConvergenceCertificate:
    """beta = alpha0/d, gamma_bar and the upper bound on M.

    Defaults are alpha0 = alpha/2 and gamma0 at the midpoint of
    (gamma + 2d/R, 1). d is floored at 1e-12 so beta stays finite.
    """
    alpha = minor.alpha
    gamma = drift.gamma
    R = minor.R
    d = max(drift.d, D_FLOOR)
    lo, hi = gamma0_interval(drift, minor)
    if alpha0 is None:
        alpha0 = alpha / 2.0
    if gamma0 is None:
        gamma0 = 0.5 * (lo + hi)
    if not 0.0 < alpha0 < alpha:
        raise ParameterOutOfRange(f"alpha0 = {alpha0!r} must lie in (0, alpha = {alpha!r})")
    if not lo < gamma0 < hi:
        raise ParameterOutOfRange(f"gamma0 = {gamma0!r} must lie in ({lo!r}, 1)")
    beta = alpha0 / d
    gamma_bar = max(1.0 - (alpha - alpha0), (2.0 + R * beta * gamma0) / (2.0 + R * beta))
    if not gamma_bar < 1.0:
        raise CertificateInvalid("gamma_bar is not below 1")
    M = max(1.0 + gamma, 2.0 + beta * d) / (1.0 - gamma_bar)
    return ConvergenceCertificate(float(alpha0), float(gamma0), float(beta), float(gamma_bar), float(M))


def certificate_json(drift: DriftCertificate, minor: MinorizationCertificate,
                     cert: ConvergenceCertificate) -> dict:
    out = {"c": float(drift.c), "d": float(drift.d)}
    out.update(minor.to_dict())
    out.update(cert.to_dict())
    return out


# -- weighted norms and audits ------------------------------------------------

def weighted_norm(f, V, beta: float = 1.0) -> float:
    """sup_x |f(x)| / (1 + beta V(x))."""
    f = np.asarray(f, dtype=float)
    return float(np.max(np.abs(f) / (1.0 + beta * np.asarray(V, dtype=float))))


def weighted_distance(mu, nu, V, beta: float = 1.0) -> float:
    """sum_x (1 + beta V(x)) |mu(x) - nu(x)|; beta = 0 is the l1 (total variation) distance."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise DimensionMismatch("measures have different lengths")
    return float(np.sum((1.0 + beta * np.asarray(V, dtype=float)) * np.abs(mu - nu)))


@dataclass
class ContractionAudit:
    worst_random: float
    worst_point_pair: float
    pairs: int
    gamma_bar: float
    ratios: np.ndarray = field(repr=False, default=None)

    @property
    def worst(self) -> float:
        return max(self.worst_random, self.worst_point_pair)

    @property
    def passed(self) -> bool:
        return self.worst <= self.gamma_bar + 1e-9


def point_pair_contraction(P, V, beta: float) -> float:
    """Exact Lipschitz constant of mu -> mu P for rho_beta.

    Any zero-mass signed measure splits into weighted differences of point
    masses without loss in rho_beta, so the worst ratio is attained at a
    pair (delta_x, delta_y).
    """
    A = np.asarray(as_stochastic(P))
    W = 1.0 + beta * np.asarray(V, dtype=float)
    worst = 0.0
    for x in range(A.shape[0] - 1):
        diff = np.abs(A[x][None, :] - A[x + 1:]) @ W
        worst = max(worst, float(np.max(diff / (W[x] + W[x + 1:]))))
    return worst


def contraction_audit(P, drift: DriftCertificate, minor: MinorizationCertificate,
                      cert: ConvergenceCertificate, trials: int = 200, rng=None,
                      raise_on_fail: bool = True) -> ContractionAudit:
    """Ratios rho_beta(mu P, nu P) / rho_beta(mu, nu) over random probability pairs.

    Half of the pairs are dense Dirichlet draws and half are sparse mixtures
    of a few point masses; every point-mass pair is audited as well.
    """
    P = as_stochastic(P)
    g = as_generator(rng)
    A = P.entries
    W = 1.0 + cert.beta * drift.V
    ratios = []
    for t in range(trials):
        if t % 2 == 0:
            mu, nu = g.dirichlet(np.ones(P.n)), g.dirichlet(np.ones(P.n))
        else:
            mu, nu = np.zeros(P.n), np.zeros(P.n)
            k = min(3, P.n)
            mu[g.choice(P.n, k, replace=False)] = g.dirichlet(np.ones(k))
            nu[g.choice(P.n, k, replace=False)] = g.dirichlet(np.ones(k))
        den = np.sum(W * np.abs(mu - nu))
        if den == 0.0:
            continue
        ratios.append(np.sum(W * np.abs((mu - nu) @ A)) / den)
    ratios = np.array(ratios)
    audit = ContractionAudit(
        worst_random=float(ratios.max()) if ratios.size else 0.0,
        worst_point_pair=point_pair_contraction(P, drift.V, cert.beta),
        pairs=int(ratios.size),
        gamma_bar=cert.gamma_bar,
        ratios=ratios,
    )
    if raise_on_fail and not audit.passed:
        raise CertificateInvalid(
            f"contraction ratio {audit.worst:.6g} exceeds gamma_bar {cert.gamma_bar:.6g}"
        )
    return audit


@dataclass
class ConvergenceBound:
    bound: np.ndarray  # indexed by n = 0..n_max
    exact: np.ndarray
    unit_weight_bound: np.ndarray  # same expression with the weight 1 + V

    @property
    def holds(self) -> bool:
        return bool(np.all(self.exact <= self.bound + 1e-9))


def convergence_bound(P, drift: DriftCertificate, minor: MinorizationCertificate,
                      cert: ConvergenceCertificate, f, x: int, n: int) -> ConvergenceBound:
    """Bound |E_x f(X_m) - pi(f)| for m = 0..n.

    bound_m = (1 + beta V(x)) M gamma_bar^m ||f - pi(f)||_{1 + beta V}, which is
    what the contraction in rho_beta yields directly.
    """
    P = as_stochastic(P)
    f = np.asarray(f, dtype=float)
    pi = invariant_distribution(P)
    centred = f - pi @ f
    V = drift.V
    beta = cert.beta
    rates = cert.gamma_bar ** np.arange(n + 1)
    bound = (1.0 + beta * V[x]) * cert.M_bound * rates * weighted_norm(centred, V, beta)
    unit = (1.0 + V[x]) * cert.M_bound * rates * weighted_norm(centred, V, 1.0)
    exact = np.empty(n + 1)
    law = np.zeros(P.n)
    law[x] = 1.0
    for m in range(n + 1):
        exact[m] = abs(law @ f - pi @ f)
        law = law @ P.entries
    return ConvergenceBound(bound, exact, unit)


@dataclass
class Pipeline:
    drift: DriftCertificate
    minor: MinorizationCertificate
    cert: ConvergenceCertificate
    chain: np.ndarray  # the (possibly accelerated) matrix the certificate is for

    def to_dict(self) -> dict:
        return certificate_json(self.drift, self.minor, self.cert)


def certify(P, V, R: float, T: int = 1, alpha0=None, gamma0=None,
            drift: Optional[DriftCertificate] = None, quantile: float = 0.05) -> Pipeline:
    """Fit drift on P, accelerate to P^T, minorize on {V < R} and build the constants."""
    P = as_stochastic(P)
    base = drift if drift is not None else fit_geometric_drift(P, V, quantile)
    if T > 1:
        chain = P.power(T)
        dr = accelerate_drift(base, T, P)
    else:
        chain = P.entries
        dr = base
    minor = find_minorization(chain, dr, R)
    cert = hairer_mattingly_constants(dr, minor, alpha0, gamma0)
    return Pipeline(dr, minor, cert, np.asarray(chain))
