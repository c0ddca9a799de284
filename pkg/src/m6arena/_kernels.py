"""Compiled inner loops for ternary-weight portfolios.

Every kernel that draws random positions seeds numba's internal generator
from an integer derived from a numpy ``Generator``, then consumes uniforms in
a fixed (batch, interval, team) order so results are reproducible.

A ternary portfolio puts ``+1/(n_plus + n_minus)`` on ``n_plus`` assets,
``-1/(n_plus + n_minus)`` on ``n_minus`` assets and zero elsewhere. The
rank-optimization portfolio (+-0.01 on all 100 assets) is the special case
``n_plus + n_minus == I``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True)
def _select(idx, n_sel):
    # partial Fisher-Yates: idx[:n_sel] becomes a uniform random ordered draw
    n = idx.shape[0]
    for j in range(n_sel):
        r = j + int(np.random.random() * (n - j))
        if r >= n:
            r = n - 1
        tmp = idx[j]
        idx[j] = idx[r]
        idx[r] = tmp


@njit(cache=True)
def subset_weights(n_assets, n_plus, n_minus, seed):
    """Weight vectors drawn exactly as the return kernels draw them."""
    _seed(seed)
    n_draws = n_plus.shape[0]
    out = np.zeros((n_draws, n_assets))
    idx = np.arange(n_assets)
    for k in range(n_draws):
        npl = n_plus[k]
        nmi = n_minus[k]
        mag = 1.0 / (npl + nmi)
        _select(idx, npl + nmi)
        for j in range(npl):
            out[k, idx[j]] = mag
        for j in range(npl, npl + nmi):
            out[k, idx[j]] = -mag
    return out


@njit(cache=True)
def subset_daily_returns(R, d, n_plus, n_minus, seed):
    """Plain daily team returns RET for fresh ternary draws each interval.

    R has shape (B, I, T) with T a multiple of d; n_plus/n_minus are per
    team. Returns RET with shape (B, K, T).
    """
    _seed(seed)
    B, I, T = R.shape
    K = n_plus.shape[0]
    M = T // d
    out = np.zeros((B, K, T))
    idx = np.arange(I)
    for b in range(B):
        for m in range(M):
            t0 = m * d
            for k in range(K):
                npl = n_plus[k]
                nmi = n_minus[k]
                mag = 1.0 / (npl + nmi)
                _select(idx, npl + nmi)
                for j in range(npl):
                    i = idx[j]
                    for t in range(t0, t0 + d):
                        out[b, k, t] += R[b, i, t]
                for j in range(npl, npl + nmi):
                    i = idx[j]
                    for t in range(t0, t0 + d):
                        out[b, k, t] -= R[b, i, t]
                for t in range(t0, t0 + d):
                    out[b, k, t] *= mag
    return out


@njit(cache=True)
def subset_interval_stats(R, d, n_plus, n_minus, seed):
    """Per-interval sufficient statistics of daily log returns.

    Returns ``(sums, m2)`` of shape (B, K, M): the sum of ln(1 + RET) over
    each interval and its centred sum of squares. Raises if any RET <= -1.
    """
    _seed(seed)
    B, I, T = R.shape
    K = n_plus.shape[0]
    M = T // d
    sums = np.zeros((B, K, M))
    m2 = np.zeros((B, K, M))
    idx = np.arange(I)
    buf = np.zeros(d)
    for b in range(B):
        for m in range(M):
            t0 = m * d
            for k in range(K):
                npl = n_plus[k]
                nmi = n_minus[k]
                mag = 1.0 / (npl + nmi)
                _select(idx, npl + nmi)
                for t in range(d):
                    buf[t] = 0.0
                for j in range(npl):
                    i = idx[j]
                    for t in range(d):
                        buf[t] += R[b, i, t0 + t]
                for j in range(npl, npl + nmi):
                    i = idx[j]
                    for t in range(d):
                        buf[t] -= R[b, i, t0 + t]
                s = 0.0
                for t in range(d):
                    x = buf[t] * mag
                    if x <= -1.0:
                        raise ArithmeticError("daily team return <= -1")
                    buf[t] = math.log1p(x)
                    s += buf[t]
                mean = s / d
                q = 0.0
                for t in range(d):
                    q += (buf[t] - mean) ** 2
                sums[b, k, m] = s
                m2[b, k, m] = q
    return sums, m2


@njit(cache=True)
def candidate_pool_ir(R, n_plus, n_minus, n_pool, seed):
    """Interval IR of every ternary candidate under shared permutations.

    R is one interval's returns (I, d). For each of ``n_pool`` uniform
    permutations the first ``n_plus[c]`` assets go long and the last
    ``n_minus[c]`` short, so every candidate c sees the same draws (common
    random numbers). Returns IR with shape (C, n_pool); NaN on zero variance.
    """
    _seed(seed)
    I, d = R.shape
    C = n_plus.shape[0]
    out = np.empty((C, n_pool))
    idx = np.arange(I)
    pre = np.zeros((I + 1, d))
    suf = np.zeros((I + 1, d))
    buf = np.zeros(d)
    for p in range(n_pool):
        _select(idx, I)
        for j in range(I):
            a = idx[j]
            z = idx[I - 1 - j]
            for t in range(d):
                pre[j + 1, t] = pre[j, t] + R[a, t]
                suf[j + 1, t] = suf[j, t] + R[z, t]
        for c in range(C):
            npl = n_plus[c]
            nmi = n_minus[c]
            mag = 1.0 / (npl + nmi)
            s = 0.0
            for t in range(d):
                x = (pre[npl, t] - suf[nmi, t]) * mag
                if x <= -1.0:
                    raise ArithmeticError("daily team return <= -1")
                buf[t] = math.log1p(x)
                s += buf[t]
            mean = s / d
            q = 0.0
            for t in range(d):
                q += (buf[t] - mean) ** 2
            if q <= 0.0 or d < 2:
                out[c, p] = np.nan
            else:
                out[c, p] = s / math.sqrt(q / (d - 1))
    return out


@njit(cache=True)
def panel_moments(pool, idx):
    """Mean/variance across panels of (cross-team mean, cross-team kurtosis).

    pool has shape (C, P) of per-team IR draws; idx (S, K) selects the K
    teams of each of S simulated panels. Returns (C, 4) with columns
    mu_g1, var_g1, mu_g2, var_g2 (variances with divisor S - 1); NaN when a
    panel has zero cross-team variance (kurtosis columns only).
    """
    C = pool.shape[0]
    S, K = idx.shape
    out = np.empty((C, 4))
    g1 = np.empty(S)
    g2 = np.empty(S)
    for c in range(C):
        bad = False
        for s in range(S):
            tot = 0.0
            for j in range(K):
                tot += pool[c, idx[s, j]]
            mean = tot / K
            v2 = 0.0
            v4 = 0.0
            for j in range(K):
                dev = pool[c, idx[s, j]] - mean
                dd = dev * dev
                v2 += dd
                v4 += dd * dd
            v2 /= K
            v4 /= K
            g1[s] = mean
            if v2 > 0.0:
                g2[s] = v4 / (v2 * v2)
            else:
                bad = True
                g2[s] = np.nan
        for col in (0, 2):
            g = g1 if col == 0 else g2
            mu = 0.0
            for s in range(S):
                mu += g[s]
            mu /= S
            var = 0.0
            for s in range(S):
                var += (g[s] - mu) ** 2
            out[c, col] = mu
            out[c, col + 1] = var / (S - 1)
        if bad:
            out[c, 2] = np.nan
            out[c, 3] = np.nan
    return out
