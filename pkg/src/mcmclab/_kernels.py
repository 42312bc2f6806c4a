"""Compiled inner loops for long simulations.

Random numbers are drawn by numpy outside these kernels, so every kernel is
a deterministic function of its inputs and results do not depend on numba's
own generator state.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def chain_path(cum, x0, u, out):
    """Fill ``out`` with a path of the chain with cumulative rows ``cum``.

    ``out[0]`` is the state after the first transition from ``x0``. Returns
    the final state.
    """
    n = cum.shape[1]
    x = x0
    for t in range(u.shape[0]):
        target = u[t]
        row = cum[x]
        lo = 0
        hi = n - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if row[mid] <= target:
                lo = mid + 1
            else:
                hi = mid
        x = lo
        out[t] = x
    return x


@njit(cache=True)
def glauber_sweep(spins, beta, h, accept_scale, heatbath, ks, us, counts, mtrace, htrace, energy):
    """Single-spin-flip dynamics on a circle.

    Site ``ks[t]`` is proposed and flipped when ``us[t]`` falls below
    ``accept_scale * a(dH)``, where a is min(1, e^{-beta dH}) or
    1/(1 + e^{beta dH}). ``counts`` (if non-empty) accumulates visits per
    configuration index (bit k set when spin k is +1). ``mtrace`` (if
    non-empty) receives the magnetization after each step and ``htrace`` the
    energy, updated from ``energy`` by the accepted dH. Returns the final
    magnetization and energy.
    """
    N = spins.shape[0]
    m = 0
    code = 0
    for k in range(N):
        m += spins[k]
        if spins[k] > 0:
            code |= 1 << k
    track = counts.shape[0] > 0
    trace = mtrace.shape[0] > 0
    for t in range(ks.shape[0]):
        k = ks[t]
        s = spins[k]
        left = spins[(k - 1) % N]
        right = spins[(k + 1) % N]
        dH = 2.0 * s * (left + right + h)
        if heatbath:
            a = 1.0 / (1.0 + np.exp(beta * dH))
        elif dH <= 0.0:
            a = 1.0
        else:
            a = np.exp(-beta * dH)
        if us[t] < accept_scale * a:
            spins[k] = -s
            m -= 2 * s
            code ^= 1 << k
            energy += dH
        if track:
            counts[code] += 1
        if trace:
            mtrace[t] = m
            htrace[t] = energy
    return m, energy
