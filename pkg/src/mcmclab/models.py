"""Concrete chains with exact analytic identities.

Ehrenfest urns and the magnetization chain, the knight on a chessboard,
walks on a cycle and on the integers, the Ising model on a circle, the
droplet-growth chain and order-1 letter chains fitted on a text corpus.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from math import exp, lgamma, log
from typing import Optional

import numpy as np

from .errors import EmptyCorpus, ParameterOutOfRange
from .markov_core import StochasticMatrix
from .rng import as_generator


# -- urns and walks ---------------------------------------------------------

def ehrenfest_matrix(N: int) -> StochasticMatrix:
    """Ehrenfest urn with N balls on {0..N}: x -> x-1 w.p. x/N, x -> x+1 w.p. 1-x/N."""
    if N < 1:
        raise ParameterOutOfRange("N must be >= 1")
    P = np.zeros((N + 1, N + 1))
    x = np.arange(N + 1)
    P[x[1:], x[1:] - 1] = x[1:] / N
    P[x[:-1], x[:-1] + 1] = 1.0 - x[:-1] / N
    return StochasticMatrix(P)


def magnetization_values(N: int) -> np.ndarray:
    return np.arange(-N, N + 1, 2, dtype=float)


def magnetization_chain(N: int, laziness: float = 0.0) -> StochasticMatrix:
    """Magnetization m in {-N, -N+2, ..., N} under uniform single-spin flips.

    m -> m+2 w.p. 1/2 - m/(2N) and m -> m-2 w.p. 1/2 + m/(2N). With
    ``laziness`` l > 0 the chain stays put w.p. l first, which removes the
    period 2 while keeping V = m^2 a geometric Lyapunov function with
    c = (1-l) 4/N and d = (1-l) 4.
    """
    if N < 2:
        raise ParameterOutOfRange("N must be >= 2")
    if not 0.0 <= laziness < 1.0:
        raise ParameterOutOfRange("laziness must lie in [0, 1)")
    P = (1.0 - laziness) * ehrenfest_matrix(N).entries + laziness * np.eye(N + 1)
    return StochasticMatrix(P)


def cycle_walk(N: int, p: float = 0.5) -> StochasticMatrix:
    """Walk on Z/NZ stepping +1 w.p. p and -1 w.p. 1-p."""
    if N < 3:
        raise ParameterOutOfRange("N must be >= 3")
    if not 0.0 < p < 1.0:
        raise ParameterOutOfRange("p must lie in (0, 1)")
    P = np.zeros((N, N))
    x = np.arange(N)
    P[x, (x + 1) % N] += p
    P[x, (x - 1) % N] += 1.0 - p
    return StochasticMatrix(P)


def reflected_walk(N: int) -> StochasticMatrix:
    """Symmetric walk on {0..N} that stays put w.p. 1/2 at the two ends."""
    P = np.zeros((N + 1, N + 1))
    for x in range(N + 1):
        P[x, max(x - 1, 0)] += 0.5
        P[x, min(x + 1, N)] += 0.5
    return StochasticMatrix(P)


def absorbed_walk(N: int) -> StochasticMatrix:
    """Symmetric walk on {0..N} absorbed at 0 and N."""
    P = np.zeros((N + 1, N + 1))
    P[0, 0] = P[N, N] = 1.0
    for x in range(1, N):
        P[x, x - 1] = P[x, x + 1] = 0.5
    return StochasticMatrix(P)


def z_walk_law(n: int, x: int) -> float:
    """P[X_n = x] for the symmetric walk on Z started at 0."""
    if n < 0 or abs(x) > n or (n + x) % 2:
        return 0.0
    k = (n + x) // 2
    return exp(lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1) - n * log(2.0))


def z_walk_simulate(n: int, replicas: int, rng=None) -> np.ndarray:
    """Endpoints X_n of independent symmetric walks on Z."""
    g = as_generator(rng)
    return 2 * g.binomial(n, 0.5, size=replicas) - n


# -- knight -------------------------------------------------------------------

KNIGHT_MOVES = ((1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2))


def square_index(rank: int, file: int) -> int:
    """Board squares are numbered 8*rank + file, with rank and file in 0..7."""
    return 8 * rank + file


def knight_moves() -> np.ndarray:
    """Number of legal knight moves from each of the 64 squares."""
    return knight_adjacency().sum(axis=1)


def knight_adjacency() -> np.ndarray:
    A = np.zeros((64, 64), dtype=int)
    for r in range(8):
        for f in range(8):
            for dr, df in KNIGHT_MOVES:
                rr, ff = r + dr, f + df
                if 0 <= rr < 8 and 0 <= ff < 8:
                    A[square_index(r, f), square_index(rr, ff)] = 1
    return A


def knight_chain() -> StochasticMatrix:
    A = knight_adjacency().astype(float)
    return StochasticMatrix(A / A.sum(axis=1, keepdims=True))


# -- Ising on a circle --------------------------------------------------------

@dataclass
class IsingModel:
    """Spins on Z/NZ with energy H = -sum_i x_i x_{i+1} - h sum_i x_i."""

    N: int
    beta: float
    h: float
    q: Optional[float] = None

    def __post_init__(self):
        if self.N < 2:
            raise ParameterOutOfRange("N must be >= 2")
        if self.beta < 0:
            raise ParameterOutOfRange("beta must be >= 0")
        if not 0.0 < self.h <= 1.0:
            raise ParameterOutOfRange("h must lie in (0, 1]")
        if self.q is None:
            self.q = 1.0 / self.N
        if not 0.0 < self.q * self.N <= 1.0 + 1e-15:
            raise ParameterOutOfRange("q must satisfy 0 < qN <= 1")


def plus_config(N: int) -> np.ndarray:
    return np.ones(N, dtype=np.int64)


def minus_config(N: int) -> np.ndarray:
    return -np.ones(N, dtype=np.int64)


def alternating_config(N: int) -> np.ndarray:
    return np.where(np.arange(N) % 2 == 0, 1, -1).astype(np.int64)


def magnetization(x) -> int:
    return int(np.sum(x))


def interfaces(x) -> int:
    """Number of neighbouring pairs i, i+1 (mod N) with opposite spins."""
    x = np.asarray(x)
    return int(np.count_nonzero(x != np.roll(x, -1)))


def ising_energy(model: IsingModel, x) -> float:
    """H(x) = 2 I(x) - h m(x) - N."""
    return 2.0 * interfaces(x) - model.h * magnetization(x) - model.N


def ising_energy_pairwise(model: IsingModel, x) -> float:
    """Energy from the bond sum, used as an independent check of the circle form."""
    x = np.asarray(x, dtype=float)
    return float(-np.sum(x * np.roll(x, -1)) - model.h * np.sum(x))


def ising_delta(model: IsingModel, x, k: int) -> float:
    """H(R_k x) - H(x) = 2 x_k (x_{k-1} + x_{k+1} + h)."""
    N = model.N
    return 2.0 * x[k] * (x[(k - 1) % N] + x[(k + 1) % N] + model.h)


def flip(x, k: int) -> np.ndarray:
    y = np.array(x, copy=True)
    y[k] = -y[k]
    return y


def config_from_index(idx: int, N: int) -> np.ndarray:
    """Bit k of idx set means spin k is +1."""
    return np.array([1 if (idx >> k) & 1 else -1 for k in range(N)], dtype=np.int64)


def config_index(x) -> int:
    return int(sum(1 << k for k, s in enumerate(x) if s > 0))


def all_configs(N: int) -> np.ndarray:
    """All 2^N configurations, row i is config_from_index(i)."""
    bits = (np.arange(2 ** N)[:, None] >> np.arange(N)[None, :]) & 1
    return (2 * bits - 1).astype(np.int64)


def ising_energies(model: IsingModel) -> np.ndarray:
    X = all_configs(model.N)
    inter = np.count_nonzero(X != np.roll(X, -1, axis=1), axis=1)
    return 2.0 * inter - model.h * X.sum(axis=1) - model.N


def gibbs_law(model: IsingModel) -> np.ndarray:
    H = ising_energies(model)
    w = np.exp(-model.beta * (H - H.min()))
    return w / w.sum()


# -- droplet chain --------------------------------------------------------------

def droplet_chain(N: int, beta: float, h: float, q: Optional[float] = None,
                  delta_H: Optional[float] = None) -> StochasticMatrix:
    """Birth chain for the growth of a droplet of + spins in the - phase.

    0 -> 1 w.p. e^{-beta dH}, 1 -> 0 w.p. q, y -> y+1 w.p. 2q for
    1 <= y <= N-1, N absorbing, the rest on the diagonal. dH defaults to 4 - 2h.
    """
    if N < 3:
        raise ParameterOutOfRange("N must be >= 3")
    q = 1.0 / N if q is None else q
    if not 0.0 < q <= 1.0 / 3.0:
        raise ParameterOutOfRange("q must lie in (0, 1/3]")
    dH = 4.0 - 2.0 * h if delta_H is None else delta_H
    P = np.zeros((N + 1, N + 1))
    P[0, 1] = exp(-beta * dH)
    P[1, 0] = q
    for y in range(1, N):
        P[y, y + 1] = 2.0 * q
    P[N, N] = 1.0
    P[np.arange(N + 1), np.arange(N + 1)] += 1.0 - P.sum(axis=1)
    return StochasticMatrix(P)


def droplet_closed_forms(N: int, beta: float, h: float, q: Optional[float] = None,
                         delta_H: Optional[float] = None) -> tuple[float, float]:
    """(E_2[tau_N], E_0[tau_N]) in closed form."""
    q = 1.0 / N if q is None else q
    dH = 4.0 - 2.0 * h if delta_H is None else delta_H
    f2 = (N - 2) / (2.0 * q)
    f0 = 1.5 * exp(beta * dH) + 1.0 / (2.0 * q) + f2
    return f2, f0


# -- letter chains ---------------------------------------------------------------

PUNCTUATION = ".,;:'!?"
ALPHABETS = {
    # 26 lower + 26 upper case letters, space and 7 punctuation marks.
    "latin60": string.ascii_lowercase + string.ascii_uppercase + " " + PUNCTUATION,
    "lower27": string.ascii_lowercase + " ",
}
DEFAULT_ALPHABET = "latin60"


def resolve_alphabet(alphabet=None) -> str:
    if alphabet is None:
        alphabet = DEFAULT_ALPHABET
    if alphabet in ALPHABETS:
        return ALPHABETS[alphabet]
    if len(set(alphabet)) != len(alphabet):
        raise ParameterOutOfRange("alphabet has repeated symbols")
    return alphabet


def filter_text(text: str, alphabet: str) -> str:
    """Map every whitespace character to a space and drop symbols outside the alphabet.

    When the alphabet has no upper-case letters, text is lower-cased first.
    """
    if not any(ch.isupper() for ch in alphabet):
        text = text.lower()
    keep = set(alphabet)
    out = []
    for ch in text:
        if ch.isspace():
            ch = " "
        if ch in keep:
            out.append(ch)
    return "".join(out)


@dataclass
class CorpusModel:
    alphabet: str
    counts: np.ndarray  # bigram counts, counts[a, b] = #(a followed by b)
    unigram: np.ndarray
    smoothing: float
    matrix: StochasticMatrix

    def index(self, ch: str) -> int:
        return self.alphabet.index(ch)

    def prob(self, a: str, b: str) -> float:
        return float(self.matrix.entries[self.index(a), self.index(b)])


def corpus_fit(text: str, alphabet=None, smoothing: float = 0.0) -> CorpusModel:
    """Order-1 letter chain with additive smoothing; empty rows use the unigram law."""
    alpha = resolve_alphabet(alphabet)
    if smoothing < 0:
        raise ParameterOutOfRange("smoothing must be >= 0")
    clean = filter_text(text, alpha)
    if len(clean) < 2:
        raise EmptyCorpus("fewer than two symbols remain after filtering")
    lookup = {ch: i for i, ch in enumerate(alpha)}
    idx = np.fromiter((lookup[ch] for ch in clean), dtype=np.int64, count=len(clean))
    k = len(alpha)
    counts = np.zeros((k, k))
    np.add.at(counts, (idx[:-1], idx[1:]), 1.0)
    uni = np.bincount(idx, minlength=k).astype(float) + smoothing
    uni /= uni.sum()
    rows = counts + smoothing
    sums = rows.sum(axis=1)
    P = np.where(sums[:, None] > 0, rows / np.where(sums > 0, sums, 1.0)[:, None], uni[None, :])
    return CorpusModel(alpha, counts, uni, float(smoothing), StochasticMatrix(P))


def corpus_generate(model: CorpusModel, length: int, rng=None) -> str:
    """Sample `length` symbols, the first from the unigram law."""
    if length <= 0:
        return ""
    g = as_generator(rng)
    first = int(np.searchsorted(np.cumsum(model.unigram), g.random(), side="right"))
    first = min(first, len(model.alphabet) - 1)
    path = np.empty(length, dtype=np.int64)
    path[0] = first
    if length > 1:
        cum = np.cumsum(model.matrix.entries, axis=1)
        cum[:, -1] = 1.0
        from ._kernels import chain_path

        chain_path(cum, first, g.random(length - 1), path[1:])
    return "".join(model.alphabet[i] for i in path)
