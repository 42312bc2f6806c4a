"""Eigenstructure of stochastic matrices and spectral convergence bounds.

Eigenvalues come from LAPACK (``numpy.linalg``). For chains that satisfy
detailed balance the symmetrized matrix ``D^{1/2} P D^{-1/2}`` with
``D = diag(pi)`` is diagonalized instead, which keeps eigenvalues real and
projectors well conditioned even under heavy degeneracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    EigensolverFailure,
    EmptySet,
    NonDiagonalizable,
    NotIrreducible,
    NotReversible,
    ZeroPiEntry,
)
from .markov_core import (
    as_probability,
    as_stochastic,
    classify,
    invariant_distribution,
    is_irreducible,
)
from .rng import as_generator

UNIT_TOL = 1e-8
COND_LIMIT = 1e8


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray  # complex, sorted by modulus descending
    rho: float
    gap: float
    pi: np.ndarray
    pi0: np.ndarray
    unit_modulus_count: int
    reversible: bool

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "rho": float(self.rho),
            "gap": float(self.gap),
            "pi": self.pi.tolist(),
            "unit_modulus_count": int(self.unit_modulus_count),
        }


def _sorted_by_modulus(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    # Stable order: modulus descending, then real part descending, then imag.
    order = np.lexsort((-values.imag, -values.real, -np.round(np.abs(values), 12)))
    return values[order]


def _symmetrized(A: np.ndarray, pi: np.ndarray) -> np.ndarray:
    s = np.sqrt(pi)
    S = (s[:, None] * A) / s[None, :]
    return 0.5 * (S + S.T)


def _reversible_pi(P) -> Optional[np.ndarray]:
    alpha = classify(P).reversible_vector
    if alpha is None or np.any(alpha <= 0):
        return None
    return alpha


def eigenvalues(P) -> np.ndarray:
    """All eigenvalues of P with multiplicity, sorted by modulus (descending)."""
    P = as_stochastic(P)
    pi = _reversible_pi(P) if is_irreducible(P) else None
    try:
        if pi is not None:
            vals = np.linalg.eigvalsh(_symmetrized(P.entries, pi)).astype(complex)
        else:
            vals = np.linalg.eigvals(P.entries)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise EigensolverFailure("eigensolver returned non-finite values")
    return _sorted_by_modulus(vals)


def spectral_radius_perp(vals: np.ndarray) -> float:
    """Largest modulus once a single copy of the eigenvalue 1 is removed."""
    vals = np.asarray(vals, dtype=complex)
    if vals.size == 1:
        return 0.0
    k = int(np.argmin(np.abs(vals - 1.0)))
    rest = np.delete(vals, k)
    if np.min(np.abs(rest - 1.0)) <= UNIT_TOL:
        raise NotIrreducible("eigenvalue 1 is not simple")
    return float(np.max(np.abs(rest)))


def full_spectrum(P) -> SpectralReport:
    P = as_stochastic(P)
    if not is_irreducible(P):
        raise NotIrreducible("spectral gap is defined for irreducible chains only")
    rev_pi = _reversible_pi(P)
    vals = eigenvalues(P)
    if np.max(np.abs(vals)) > 1.0 + UNIT_TOL:
        raise EigensolverFailure("eigenvalue outside the unit disk")
    rho = spectral_radius_perp(vals)
    pi = invariant_distribution(P)
    return SpectralReport(
        eigenvalues=vals,
        rho=rho,
        gap=1.0 - rho,
        pi=pi,
        pi0=np.outer(np.ones(P.n), pi),
        unit_modulus_count=int(np.count_nonzero(np.abs(np.abs(vals) - 1.0) <= UNIT_TOL)),
        reversible=rev_pi is not None,
    )


# -- Dunford decomposition --------------------------------------------------

@dataclass
class SpectralProjector:
    eigenvalue: complex
    matrix: np.ndarray


def _eigensystem(P):
    """Return (values, right vectors R, left vectors L) with L @ R = I."""
    P = as_stochastic(P)
    pi = _reversible_pi(P) if is_irreducible(P) else None
    try:
        if pi is not None:
            w, Q = np.linalg.eigh(_symmetrized(P.entries, pi))
            s = np.sqrt(pi)
            R = Q / s[:, None]
            L = Q.T * s[None, :]
            return w.astype(complex), R.astype(complex), L.astype(complex)
        w, R = np.linalg.eig(P.entries)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NonDiagonalizable(f"eigenvector matrix condition number {cond:.3e}")
    return w, R, np.linalg.inv(R)


def spectral_projectors(P, tol: float = 1e-9) -> list[SpectralProjector]:
    """Projectors onto eigenspaces, equal eigenvalues (within tol) merged."""
    w, R, L = _eigensystem(P)
    order = np.argsort(-np.abs(w), kind="stable")
    groups: list[list[int]] = []
    for j in order:
        for g in groups:
            if abs(w[g[0]] - w[j]) <= tol:
                g.append(int(j))
                break
        else:
            groups.append([int(j)])
    out = []
    for g in groups:
        mat = R[:, g] @ L[g, :]
        lam = w[g].mean()
        if np.all(np.abs(mat.imag) < 1e-12) and abs(lam.imag) < 1e-12:
            mat, lam = mat.real, complex(lam.real)
        out.append(SpectralProjector(lam, mat))
    return out


def dunford_power(P, n: int) -> np.ndarray:
    """P^n assembled as sum_j lambda_j^n Pi_j from spectral projectors."""
    if n < 0:
        raise ValueError("n must be >= 0")
    w, R, L = _eigensystem(P)
    out = (R * (w ** int(n))[None, :]) @ L
    if np.max(np.abs(out.imag)) > 1e-9:
        raise EigensolverFailure("complex residue in a real matrix power")
    return np.ascontiguousarray(out.real)


def power_with_fallback(P, n: int) -> tuple[np.ndarray, str]:
    """Dunford power if diagonalizable, else direct powering; returns (matrix, method)."""
    try:
        return dunford_power(P, n), "dunford"
    except NonDiagonalizable:
        return as_stochastic(P).power(n), "direct"


def decay_ratio(P, f, n: int) -> float:
    """Empirical ||P_perp^n f||_inf / (rho^n ||f||_inf), in place of an eigenbasis constant."""
    P = as_stochastic(P)
    rep = full_spectrum(P)
    f = np.asarray(f, dtype=float)
    g = f - rep.pi @ f
    num = np.max(np.abs(P.power(n) @ g))
    den = rep.rho ** n * np.max(np.abs(f))
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return float(num / den)


# -- reversible chains ------------------------------------------------------

def pi_inner(f, g, pi) -> float:
    """<f, g>_pi = sum_x pi(x) f(x) g(x)."""
    return float(np.sum(np.asarray(pi) * np.asarray(f) * np.asarray(g)))


def _reversible_law(P) -> np.ndarray:
    P = as_stochastic(P)
    rep = classify(P)
    if rep.reversible_vector is None:
        raise NotReversible("no reversible vector exists for this chain")
    if not rep.irreducible:
        raise NotIrreducible("the chain has more than one communication class")
    pi = rep.reversible_vector
    if np.any(pi <= 0):
        raise ZeroPiEntry("pi vanishes somewhere")
    return pi


@dataclass
class ReversibleBound:
    bound: float
    exact: float
    rho: float


def reversible_convergence_bound(P, nu, f, n: int) -> ReversibleBound:
    """Compare |E_nu f(X_n) - pi(f)| with
    rho^n ||f||_inf ||nu - pi||_1^{1/2} sup_x |nu(x)/pi(x) - 1|^{1/2}."""
    P = as_stochastic(P)
    pi = _reversible_law(P)
    nu = as_probability(nu, P.n)
    f = np.asarray(f, dtype=float)
    rho = full_spectrum(P).rho
    l1 = float(np.abs(nu - pi).sum())
    sup = float(np.max(np.abs(nu / pi - 1.0)))
    bound = rho ** n * np.max(np.abs(f)) * np.sqrt(l1) * np.sqrt(sup)
    law = nu.copy()
    for _ in range(int(n)):
        law = law @ P.entries
    exact = abs(law @ f - pi @ f)
    return ReversibleBound(float(bound), float(exact), rho)


@dataclass
class UniformNuBounds:
    delta: float
    c: float
    l1_bound: float
    sup_bound: float
    exact_l1: float
    exact_sup: float


def uniform_nu_bounds(pi, X0) -> UniformNuBounds:
    """Bounds on ||nu - pi||_1 and sup|nu/pi - 1| for nu uniform on X0.

    With delta = pi(X0^c) and c = max_X0 pi / min_X0 pi - 1 the bounds are
    2 delta + c and max{1, (c + delta)/(1 - delta)}.
    """
    pi = np.asarray(pi, dtype=float)
    X0 = np.unique(np.atleast_1d(np.asarray(X0, dtype=int)))
    if X0.size == 0:
        raise EmptySet("X0 is empty")
    sub = pi[X0]
    if np.any(sub <= 0):
        raise ZeroPiEntry("pi vanishes on X0")
    delta = float(max(0.0, 1.0 - sub.sum()))
    c = float(sub.max() / sub.min() - 1.0)
    nu = np.zeros_like(pi)
    nu[X0] = 1.0 / X0.size
    support = pi > 0
    exact_sup = float(np.max(np.abs(nu[support] / pi[support] - 1.0)))
    sup_bound = max(1.0, (c + delta) / (1.0 - delta)) if delta < 1 else np.inf
    return UniformNuBounds(
        delta=delta,
        c=c,
        l1_bound=2.0 * delta + c,
        sup_bound=float(sup_bound),
        exact_l1=float(np.abs(nu - pi).sum()),
        exact_sup=exact_sup,
    )


def rayleigh_rho(P, trials: int = 8, rng=None, krylov_dim: int = 40, restarts: int = 6) -> float:
    """Lower estimate of rho from Rayleigh quotients on pi-centred vectors.

    Works with the symmetrized matrix S, where <v, P v>_pi / <v, v>_pi is the
    ordinary Rayleigh quotient of S at D^{1/2} v. Each trial starts from a
    random vector orthogonal to sqrt(pi), builds a Krylov subspace and keeps
    the Ritz value of largest modulus, restarting from its Ritz vector. Every
    Ritz value lies in the spectrum's convex hull on that subspace, so the
    result never exceeds rho beyond rounding.
    """
    P = as_stochastic(P)
    pi = _reversible_law(P)
    S = _symmetrized(P.entries, pi)
    u0 = np.sqrt(pi)
    n = P.n
    if n == 1:
        return 0.0
    g = as_generator(rng)
    dim = max(1, min(krylov_dim, n - 1))

    def project(v):
        v = v - (u0 @ v) * u0
        return v

    best = 0.0
    for _ in range(trials):
        v = project(g.standard_normal(n))
        for _ in range(restarts):
            norm = np.linalg.norm(v)
            if norm < 1e-300:
                break
            basis = [v / norm]
            for _ in range(dim - 1):
                w = project(S @ basis[-1])
                for b in basis:
                    w -= (b @ w) * b
                for b in basis:
                    w -= (b @ w) * b
                nw = np.linalg.norm(w)
                if nw < 1e-12:
                    break
                basis.append(w / nw)
            Qm = np.array(basis).T
            T = Qm.T @ S @ Qm
            theta, Y = np.linalg.eigh(0.5 * (T + T.T))
            k = int(np.argmax(np.abs(theta)))
            best = max(best, float(abs(theta[k])))
            v = project(Qm @ Y[:, k]) + 1e-3 * project(g.standard_normal(n))
    return best
