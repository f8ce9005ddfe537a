"""Compiled inner loops of the similarity stage.

Both kernels assume one variance per characteristic and domain, which is how
the sensing model fills its tables. Mixture similarities are read off the
per-ratio log tables built in :mod:`fanet_sybil.similarity`.
"""

from __future__ import annotations

import math

import numba
import numpy as np

LN2 = math.log(2.0)
SENTINEL = 1e18


@numba.njit(cache=True, inline="always")
def _similarity(d, va, vb, logs, step, span, moment):
    if moment:
        var_m = 0.5 * (va + vb) + 0.25 * d * d
        bits = 0.5 * math.log(var_m / math.sqrt(va * vb)) / LN2
        return 1.0 - min(max(bits, 0.0), 1.0)
    gap = abs(d) / math.sqrt(va + vb)
    if gap == 0.0 and va == vb:
        return 1.0
    if gap > span:
        return 0.0
    n = logs.shape[0]
    pos = min(gap / step, n - 1.0)
    i = min(int(pos), n - 2)
    v = math.exp(logs[i] + (pos - i) * (logs[i + 1] - logs[i]))
    if v < 1e-290:
        return 0.0
    return min(v, 1.0)


@numba.njit(cache=True)
def uniform(var):
    """True if every row of ``var`` equals the first and is positive."""
    k, kf = var.shape
    if k == 0:
        return False
    for f in range(kf):
        if not var[0, f] > 0.0:
            return False
    for i in range(1, k):
        for f in range(kf):
            if var[i, f] != var[0, f]:
                return False
    return True


@numba.njit(cache=True)
def raw_weights(ad_mu, ad_var, logs, step, span, moment):
    """Mean distinguishability of each characteristic over the AD entries."""
    ka, kf = ad_mu.shape
    raw = np.ones(kf)
    if ka < 2:
        return raw
    sim = np.empty(ka)
    log_e = np.empty(ka)
    for k in range(kf):
        total = 0.0
        for j in range(ka):
            log_prod = 0.0
            n_zero = 0
            for q in range(ka):
                if q == j:
                    sim[q] = 0.0
                    log_e[q] = 0.0
                    continue
                s = _similarity(ad_mu[j, k] - ad_mu[q, k], ad_var[k], ad_var[k], logs[k], step, span, moment)
                sim[q] = s
                if s >= 1.0:
                    n_zero += 1
                    log_e[q] = 0.0
                else:
                    log_e[q] = math.log(1.0 - s)
                    log_prod += log_e[q]
            p = 0.0
            if n_zero == 0:
                for q in range(ka):
                    if q != j and sim[q] > 0.0:
                        p += sim[q] * math.exp(log_prod - log_e[q])
            elif n_zero == 1:
                p = math.exp(log_prod)
            total += min(max(p, 0.0), 1.0)
        raw[k] = total / ka
    return raw


@numba.njit(cache=True)
def costs(vd_mu, vd_var, ad_mu, ad_var, w, logs, step, span, moment, eps_d):
    """Padded K_a x K_a cost matrix: weighted harmonic-mean inverse, SENTINEL on veto."""
    kv, kf = vd_mu.shape
    ka = ad_mu.shape[0]
    out = np.full((ka, ka), SENTINEL)
    for i in range(kv):
        for c in range(ka):
            inv = 0.0
            veto = False
            for k in range(kf):
                if w[k] <= 0.0:
                    continue
                s = _similarity(vd_mu[i, k] - ad_mu[c, k], vd_var[k], ad_var[k], logs[k], step, span, moment)
                if s <= eps_d:
                    veto = True
                    break
                inv += w[k] / s
            if not veto and 0.0 < inv < SENTINEL:
                out[i, c] = inv
    return out


@numba.njit(cache=True)
def stage(vd_mu, vd_var, ad_mu, ad_var, logs_aa, logs_va, step, span, moment, eps_d, w_fixed, dynamic):
    """Whole similarity stage for one receiver: weights, then padded costs.

    Returns (costs, raw, normalized, ok); ``ok`` is False when the variances
    are not shared per column, and the caller must take the general path.
    """
    kf = ad_mu.shape[1]
    if not (uniform(vd_var) and uniform(ad_var)):
        return np.empty((0, 0)), np.empty(0), np.empty(0), False
    va = ad_var[0].copy()
    vv = vd_var[0].copy()
    if dynamic:
        raw = raw_weights(ad_mu, va, logs_aa, step, span, moment)
        total = raw.sum()
        if total < 1e-12:
            w = np.full(kf, 1.0 / kf)
        else:
            w = raw / total
    else:
        raw = w_fixed.copy()
        w = w_fixed
    return costs(vd_mu, vv, ad_mu, va, w, logs_va, step, span, moment, eps_d), raw, w, True
