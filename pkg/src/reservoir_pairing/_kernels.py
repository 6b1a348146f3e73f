"""Compiled per-step loops for the sequential designs.

These mirror the pure-Python policies exactly (same operation order, same
tie-breaking) and exist only for speed; equivalence is enforced by tests.
"""

from __future__ import annotations

import numpy as np
from numba import njit

ZERO_VARIANCE_EPS = 1e-12


@njit(cache=True)
def packing_kernel(x, delta, use_standardize, coins):
    """Packing-radius reservoir design over a (T, d) stream.

    Returns (arms, partner, n_reservoir, decision_distance) where
    ``partner[t]`` is the 0-based partner index of unit t if it paired on
    arrival, else -1.
    """
    t_total, dim = x.shape
    arms = np.zeros(t_total, dtype=np.int8)
    partner = np.full(t_total, -1, dtype=np.int64)
    n_reservoir = np.zeros(t_total, dtype=np.int64)
    dec_dist = np.full(t_total, np.nan)

    res_rows = np.empty((t_total, dim))
    res_idx = np.empty(t_total, dtype=np.int64)
    n_res = 0

    mean = np.zeros(dim)
    m2 = np.zeros(dim)
    scale = np.ones(dim)
    inv_exp = -1.0 / ((2.0 + delta) * dim)
    n_coins = 0

    for t in range(t_total):
        # Welford update over rows 1..t+1 (population variance)
        n = t + 1
        for c in range(dim):
            delta_c = x[t, c] - mean[c]
            mean[c] += delta_c / n
            m2[c] += delta_c * (x[t, c] - mean[c])

        paired = False
        if n_res > 0:
            if use_standardize:
                for c in range(dim):
                    s = np.sqrt(m2[c] / n)
                    scale[c] = s if s > ZERO_VARIANCE_EPS else 1.0
            best = -1
            best_d2 = np.inf
            for j in range(n_res):
                s = 0.0
                for c in range(dim):
                    diff = (x[t, c] - res_rows[j, c]) / scale[c]
                    s += diff * diff
                if s < best_d2 or (s == best_d2 and res_idx[j] < res_idx[best]):
                    best_d2 = s
                    best = j
            lam = n ** inv_exp
            dist = np.sqrt(best_d2)
            if dist < lam:
                s_idx = res_idx[best]
                arms[t] = 1 - arms[s_idx]
                partner[t] = s_idx
                dec_dist[t] = dist
                n_res -= 1
                res_rows[best] = res_rows[n_res]
                res_idx[best] = res_idx[n_res]
                paired = True
        if not paired:
            arms[t] = coins[n_coins]
            n_coins += 1
            res_rows[n_res] = x[t]
            res_idx[n_res] = t
            n_res += 1
        n_reservoir[t] = n_res

    return arms, partner, n_reservoir, dec_dist


@njit(cache=True)
def _cholesky_lower(a, lower):
    """In-place lower Cholesky; returns False on non-PD input."""
    n = a.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= lower[i, k] * lower[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                lower[i, j] = np.sqrt(s)
            else:
                lower[i, j] = s / lower[j, j]
    return True


@njit(cache=True)
def kk14_kernel(x, burn_in, cutoffs, coins):
    """Mahalanobis-cutoff reservoir design over a (T, d) stream.

    ``cutoffs[t]`` is the squared-distance cutoff for 1-based step t + 1
    minus one (i.e. indexed by 0-based step). The covariance estimate at
    step t uses the first t - 1 rows with denominator t - 2.
    """
    t_total, dim = x.shape
    arms = np.zeros(t_total, dtype=np.int8)
    partner = np.full(t_total, -1, dtype=np.int64)
    n_reservoir = np.zeros(t_total, dtype=np.int64)
    dec_dist = np.full(t_total, np.nan)

    res_rows = np.empty((t_total, dim))
    res_idx = np.empty(t_total, dtype=np.int64)
    n_res = 0

    # Welford over rows seen before the current arrival
    count = 0
    mean = np.zeros(dim)
    m2 = np.zeros((dim, dim))
    delta_vec = np.empty(dim)
    cov = np.empty((dim, dim))
    lower = np.zeros((dim, dim))
    u = np.empty(dim)
    n_coins = 0

    for t in range(t_total):
        step = t + 1  # 1-based arrival index
        paired = False
        if step > burn_in and n_res > 0 and count >= 2:
            for i in range(dim):
                for j in range(dim):
                    cov[i, j] = m2[i, j] / (count - 1)
            if _cholesky_lower(cov, lower):
                best = -1
                best_d2 = np.inf
                for j in range(n_res):
                    # forward solve L u = x_t - row
                    for i in range(dim):
                        s = x[t, i] - res_rows[j, i]
                        for k in range(i):
                            s -= lower[i, k] * u[k]
                        u[i] = s / lower[i, i]
                    d2 = 0.0
                    for i in range(dim):
                        d2 += u[i] * u[i]
                    if d2 < best_d2 or (d2 == best_d2 and res_idx[j] < res_idx[best]):
                        best_d2 = d2
                        best = j
                if best_d2 < cutoffs[t]:
                    s_idx = res_idx[best]
                    arms[t] = 1 - arms[s_idx]
                    partner[t] = s_idx
                    dec_dist[t] = np.sqrt(best_d2)
                    n_res -= 1
                    res_rows[best] = res_rows[n_res]
                    res_idx[best] = res_idx[n_res]
                    paired = True
        if not paired:
            arms[t] = coins[n_coins]
            n_coins += 1
            res_rows[n_res] = x[t]
            res_idx[n_res] = t
            n_res += 1
        n_reservoir[t] = n_res

        # fold the current row into the covariance statistics
        count += 1
        for c in range(dim):
            delta_vec[c] = x[t, c] - mean[c]
            mean[c] += delta_vec[c] / count
        for i in range(dim):
            for j in range(dim):
                m2[i, j] += delta_vec[i] * (x[t, j] - mean[j])

    return arms, partner, n_reservoir, dec_dist
