"""Divergences, dynamic characteristic weights and VD-AD matching costs.

The pairwise score D used throughout is a *similarity* in [0, 1]: one minus
the Jensen-Shannon divergence in bits between two Gaussian observations.
Two midpoints are supported. ``mode="moment"`` replaces the equal-weight
mixture by its Gaussian moment-match, which keeps everything in closed form
but saturates at 1 bit once the means are a couple of standard deviations
apart. ``mode="mixture"`` (the default) uses the mixture itself; it never
saturates, so distant pairs stay ordered.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, interpolate

from . import _kernels
from .sensing import GaussianObservation, NeighborTable

LN2 = math.log(2.0)
SENTINEL = 1e18
EPS_D = 1e-9
MODES = ("moment", "mixture")
DEFAULT_MODE = "mixture"


def _check_variance(*obs: GaussianObservation) -> None:
    for o in obs:
        if not o.variance > 0:
            raise ValueError(f"variance must be positive, got {o.variance}")


def kl_gaussian(a: GaussianObservation, b: GaussianObservation) -> float:
    """Relative entropy R(a || b) between two Gaussian densities, in nats."""
    _check_variance(a, b)
    d = a.mean - b.mean
    return 0.5 * math.log(b.variance / a.variance) + (a.variance + d * d) / (2.0 * b.variance) - 0.5


def moment_midpoint(a: GaussianObservation, b: GaussianObservation) -> GaussianObservation:
    d = a.mean - b.mean
    return GaussianObservation(0.5 * (a.mean + b.mean), 0.5 * (a.variance + b.variance) + 0.25 * d * d)


def js_divergence(a: GaussianObservation, b: GaussianObservation, mode: str = DEFAULT_MODE) -> float:
    """Jensen-Shannon divergence in nats."""
    _check_variance(a, b)
    if mode == "moment":
        m = moment_midpoint(a, b)
        return 0.5 * kl_gaussian(a, m) + 0.5 * kl_gaussian(b, m)
    if mode == "mixture":
        return _js_mixture(a, b)
    raise ValueError(f"unknown divergence mode {mode!r}; expected one of {MODES}")


def _mixture_similarity(delta: float, sa: float, sb: float) -> float:
    """1 - JSD/ln 2 for N(0, sa^2) against N(delta, sb^2) under the exact mixture.

    Written as (E_a[ln(1 + b/a)] + E_b[ln(1 + a/b)]) / (2 ln 2), which is
    what is left of 1 - JSD/ln 2 after the ln 2 terms cancel. No subtraction
    is involved, so far-apart pairs keep their tiny similarity instead of
    rounding to 0.
    """
    delta = abs(delta)
    if delta == 0 and sa == sb:
        return 1.0
    lo = min(-12 * sa, delta - 12 * sb)
    hi = max(12 * sa, delta + 12 * sb)
    ca, cb = math.log(sa * math.sqrt(2 * math.pi)), math.log(sb * math.sqrt(2 * math.pi))

    def integrand(x):
        la = -0.5 * (x / sa) ** 2 - ca
        lb = -0.5 * ((x - delta) / sb) ** 2 - cb
        return math.exp(la) * np.logaddexp(0.0, lb - la) + math.exp(lb) * np.logaddexp(0.0, la - lb)

    # breakpoints bracket each peak so a narrow density is never stepped over
    pts = sorted({p for p in (0.0, delta, 0.5 * delta, -4 * sa, 4 * sa, delta - 4 * sb, delta + 4 * sb) if lo < p < hi})
    val, _ = integrate.quad(integrand, lo, hi, points=pts, limit=400, epsabs=0.0, epsrel=1e-10)
    return min(max(val / (2 * LN2), 0.0), 1.0)


def _js_mixture(a: GaussianObservation, b: GaussianObservation) -> float:
    sim = _mixture_similarity(b.mean - a.mean, math.sqrt(a.variance), math.sqrt(b.variance))
    return LN2 * (1.0 - sim)


def js_similarity(a: GaussianObservation, b: GaussianObservation, mode: str = DEFAULT_MODE) -> float:
    """1 - JSD in bits, clipped to [0, 1]. Symmetric; 1 iff the observations coincide."""
    if mode == "mixture":
        _check_variance(a, b)
        return _mixture_similarity(b.mean - a.mean, math.sqrt(a.variance), math.sqrt(b.variance))
    jsd_bits = js_divergence(a, b, mode) / LN2
    return 1.0 - min(max(jsd_bits, 0.0), 1.0)


def js_similarity_arrays(mu_a, var_a, mu_b, var_b) -> np.ndarray:
    """Broadcasting moment-matched similarity.

    With the moment-matched midpoint the two relative entropies collapse to
    JSD = 0.5 * ln(var_m / sqrt(var_a * var_b)), var_m = (var_a + var_b)/2 + (mu_a - mu_b)^2/4.
    """
    d = mu_a - mu_b
    var_m = 0.5 * (var_a + var_b) + 0.25 * d * d
    jsd_bits = 0.5 * np.log(var_m / np.sqrt(var_a * var_b)) / LN2
    return 1.0 - np.clip(jsd_bits, 0.0, 1.0)


# Mixture similarity only depends on the std ratio and on the mean gap in
# units of sqrt(var_a + var_b), so one table per ratio serves every pair.
_TABLE_SPAN = 20.0
_TABLE_STEP = 0.05
_FINE_STEP = 0.004
_TINY = 1e-300


@functools.lru_cache(maxsize=64)
def _mixture_table(ratio: float) -> tuple[np.ndarray, np.ndarray]:
    """Log-similarity against the scaled mean gap, for std ratio ``ratio`` <= 1.

    Quadrature on a coarse grid, a cubic spline through it, then a fine
    resampling so lookups are a plain linear interpolation.
    """
    sb = 1.0 / math.sqrt(1.0 + ratio * ratio)
    sa = ratio * sb
    coarse = np.arange(0.0, _TABLE_SPAN + _TABLE_STEP / 2, _TABLE_STEP)
    logs = np.array([math.log(max(_mixture_similarity(g, sa, sb), _TINY)) for g in coarse])
    spline = interpolate.CubicSpline(coarse, logs, bc_type=((1, 0.0), "not-a-knot"))
    fine = np.arange(0.0, _TABLE_SPAN + _FINE_STEP / 2, _FINE_STEP)
    return fine, spline(fine)


def _lookup(ratio: float, gap: np.ndarray) -> np.ndarray:
    _, logs = _mixture_table(round(ratio, 12))
    # uniform grid, so the bracketing knot is a floor division away
    pos = np.minimum(gap * (1.0 / _FINE_STEP), logs.size - 1.0)
    i = np.minimum(pos.astype(np.intp), logs.size - 2)
    frac = pos - i
    out = np.exp(logs[i] + frac * (logs[i + 1] - logs[i]))
    out[(out < 1e-290) | (gap > _TABLE_SPAN)] = 0.0
    if ratio == 1.0:
        out[gap == 0] = 1.0
    return np.minimum(out, 1.0)


def mixture_similarity_arrays(mu_a, var_a, mu_b, var_b) -> np.ndarray:
    """Broadcasting exact-mixture similarity, read off cached per-ratio tables.

    Relative error is about 1e-6 for std ratios down to 0.01 and degrades
    below that. Gaps beyond 20 combined standard deviations, where the
    similarity is far below 1e-40, are reported as 0.
    """
    mu_a, var_a, mu_b, var_b = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (mu_a, var_a, mu_b, var_b)))
    if np.any(var_a <= 0) or np.any(var_b <= 0):
        raise ValueError("variance must be positive")
    gap = np.abs(mu_a - mu_b) / np.sqrt(var_a + var_b)
    ratio = np.round(np.sqrt(np.minimum(var_a, var_b) / np.maximum(var_a, var_b)), 12)
    out = np.empty(gap.shape)
    for r in np.unique(ratio):
        sel = ratio == r
        out[sel] = _lookup(float(r), gap[sel])
    return out


def _pairwise_similarity(mu_a, var_a, mu_b, var_b, mode: str) -> np.ndarray:
    """Similarity between every a (rows) and every b (columns) for one characteristic."""
    if mode == "moment":
        return js_similarity_arrays(mu_a[:, None], var_a[:, None], mu_b[None, :], var_b[None, :])
    if mode != "mixture":
        raise ValueError(f"unknown divergence mode {mode!r}; expected one of {MODES}")
    if var_a.size and var_b.size and var_a.min() == var_a.max() and var_b.min() == var_b.max():
        # the usual case: one variance per domain, so a single table serves
        va, vb = float(var_a[0]), float(var_b[0])
        if va <= 0 or vb <= 0:
            raise ValueError("variance must be positive")
        gap = np.abs(mu_a[:, None] - mu_b[None, :]) * (1.0 / math.sqrt(va + vb))
        return _lookup(math.sqrt(min(va, vb) / max(va, vb)), gap)
    return mixture_similarity_arrays(mu_a[:, None], var_a[:, None], mu_b[None, :], var_b[None, :])


def distinguishability_from_similarity(sim: np.ndarray) -> np.ndarray:
    """Distinguishability of every entry given its pairwise similarity matrix.

    p_j = sum_{p != j} D_jp * prod_{q != j, p} (1 - D_jq). The leave-one-out
    products come from one log-product per row, with exact zero factors
    (D = 1) counted separately, so the whole thing is O(K^2).
    """
    k = sim.shape[0]
    if k < 2:
        return np.ones(k)
    d = np.array(sim, dtype=float)
    np.fill_diagonal(d, 0.0)
    e = 1.0 - d
    off = ~np.eye(k, dtype=bool)
    zero = (e <= 0.0) & off
    n_zero = zero.sum(axis=1)
    with np.errstate(divide="ignore"):
        log_e = np.where(off & ~zero, np.log(np.where(e > 0, e, 1.0)), 0.0)
    log_prod = log_e.sum(axis=1)

    terms = np.where(n_zero[:, None] == 0, d * np.exp(log_prod[:, None] - log_e), 0.0)
    one_zero = n_zero == 1
    if one_zero.any():
        # the only surviving term is the p whose factor vanishes (D_jp = 1)
        terms[one_zero] = np.where(zero[one_zero], np.exp(log_prod[one_zero])[:, None], 0.0)
    terms[~off] = 0.0
    return np.clip(terms.sum(axis=1), 0.0, 1.0)


def distinguishability(j: int, k: int, ad_table: NeighborTable, mode: str = DEFAULT_MODE) -> float:
    """Probability-style score that entry ``j``'s ``k``-th characteristic stands apart.

    Direct evaluation of the sum-of-products; a lone neighbour scores 1.
    """
    n = len(ad_table)
    if n < 2:
        return 1.0
    obs = [ad_table.characteristics(i)[k] for i in range(n)]
    sims = [js_similarity(obs[j], obs[q], mode) if q != j else 0.0 for q in range(n)]
    total = 0.0
    for p in range(n):
        if p == j:
            continue
        prod = 1.0
        for q in range(n):
            if q != j and q != p:
                prod *= 1.0 - sims[q]
        total += sims[p] * prod
    return min(max(total, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class WeightVector:
    raw: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_raw(cls, raw) -> "WeightVector":
        raw = np.asarray(raw, dtype=float)
        total = raw.sum()
        if total < 1e-12:
            normalized = np.full(raw.shape, 1.0 / raw.size)
        else:
            normalized = raw / total
        return cls(raw, normalized)

    @classmethod
    def indicator(cls, k: int, n: int) -> "WeightVector":
        w = np.zeros(n)
        w[k] = 1.0
        return cls(w, w.copy())


def dynamic_weights(ad_table: NeighborTable, mode: str = DEFAULT_MODE) -> WeightVector:
    """Raw weight of a characteristic = mean distinguishability over the AD entries."""
    n, kf = ad_table.means.shape
    if n == 0:
        return WeightVector.from_raw(np.zeros(kf))
    var = _uniform_variances(ad_table)
    if var is not None:
        logs = _kernel_tables(mode, var, var)
        return WeightVector.from_raw(
            _kernels.raw_weights(ad_table.means, var, logs, _FINE_STEP, _TABLE_SPAN, mode == "moment")
        )
    raw = np.empty(kf)
    for k in range(kf):
        mu, v = ad_table.means[:, k], ad_table.variances[:, k]
        raw[k] = distinguishability_from_similarity(_pairwise_similarity(mu, v, mu, v, mode)).mean()
    return WeightVector.from_raw(raw)


def _uniform_variances(table: NeighborTable) -> Optional[np.ndarray]:
    """The per-characteristic variance if every entry shares it, else None."""
    v = table.variances
    return np.ascontiguousarray(v[0]) if _kernels.uniform(v) else None


def _kernel_tables(mode: str, var_a: np.ndarray, var_b: np.ndarray) -> np.ndarray:
    if mode == "moment":
        return np.zeros((var_a.size, 2))
    if mode != "mixture":
        raise ValueError(f"unknown divergence mode {mode!r}; expected one of {MODES}")
    ratios = tuple(round(math.sqrt(min(a, b) / max(a, b)), 12) for a, b in zip(var_a, var_b))
    return _stacked_tables(ratios)


@functools.lru_cache(maxsize=64)
def _stacked_tables(ratios: tuple) -> np.ndarray:
    return np.stack([_mixture_table(r)[1] for r in ratios])


@functools.lru_cache(maxsize=256)
def _stage_tables(mode: str, vd_var: tuple, ad_var: tuple) -> tuple[np.ndarray, np.ndarray]:
    va, vv = np.array(ad_var), np.array(vd_var)
    return _kernel_tables(mode, va, va), _kernel_tables(mode, vv, va)


def pair_similarity(
    vf: Sequence[GaussianObservation],
    af: Sequence[GaussianObservation],
    w: WeightVector,
    eps_d: float = EPS_D,
    mode: str = DEFAULT_MODE,
) -> float:
    """Weighted harmonic mean of per-characteristic similarities.

    Any weighted characteristic with similarity at or below ``eps_d`` vetoes
    the pair (similarity 0). Characteristics with zero weight are ignored.
    """
    if len(vf) != len(af) or len(vf) != len(w.normalized):
        raise ValueError("characteristic vectors and weights must share length K_f")
    inv = 0.0
    for a, b, wk in zip(vf, af, w.normalized):
        if wk <= 0:
            continue
        d = js_similarity(a, b, mode)
        if d <= eps_d:
            return 0.0
        inv += wk / d
    return 1.0 / inv if inv > 0 else 0.0


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Square K_a x K_a matching costs: K_v real VD rows, then SENTINEL padding rows."""

    values: np.ndarray
    n_real: int

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def real(self) -> np.ndarray:
        return self.values[: self.n_real]

    def is_sentinel(self) -> np.ndarray:
        return self.values >= SENTINEL


def similarity_matrix(
    vd_table: NeighborTable,
    ad_table: NeighborTable,
    weights: WeightVector,
    eps_d: float = EPS_D,
    mode: str = DEFAULT_MODE,
) -> np.ndarray:
    """Pair similarity of every (VD row, AD column)."""
    inv = _inverse_similarity(vd_table, ad_table, weights, eps_d, mode)
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(inv), 1.0 / inv, 0.0)


def _inverse_similarity(vd_table, ad_table, weights, eps_d, mode) -> np.ndarray:
    kv, ka = len(vd_table), len(ad_table)
    inv = np.zeros((kv, ka))
    veto = np.zeros((kv, ka), dtype=bool)
    for k, wk in enumerate(weights.normalized):
        if wk <= 0:
            continue
        d = _pairwise_similarity(
            vd_table.means[:, k], vd_table.variances[:, k], ad_table.means[:, k], ad_table.variances[:, k], mode
        )
        veto |= d <= eps_d
        inv += wk / np.maximum(d, eps_d)
    inv[veto] = np.inf
    return inv


def similarity_stage(
    vd_table: NeighborTable,
    ad_table: NeighborTable,
    weights: Optional[WeightVector] = None,
    eps_d: float = EPS_D,
    mode: str = DEFAULT_MODE,
) -> tuple[CostMatrix, WeightVector]:
    """Weights (dynamic unless given) and the padded cost matrix for one receiver.

    Costs are c = 1/s, SENTINEL where s = 0, padded with SENTINEL rows to
    K_a x K_a. The dynamic weights are computed once and shared by every pair.
    """
    kv, ka = len(vd_table), len(ad_table)
    if kv > ka:
        raise ValueError(f"cannot pad: K_v={kv} exceeds K_a={ka}")
    if kv:
        logs_aa, logs_va = _stage_tables(mode, tuple(vd_table.variances[0].tolist()), tuple(ad_table.variances[0].tolist()))
        fixed = _NO_WEIGHTS if weights is None else np.ascontiguousarray(weights.normalized, dtype=float)
        values, raw, norm, ok = _kernels.stage(
            vd_table.means, vd_table.variances, ad_table.means, ad_table.variances, logs_aa, logs_va,
            _FINE_STEP, _TABLE_SPAN, mode == "moment", eps_d, fixed, weights is None,
        )
        if ok:
            return CostMatrix(values, kv), (WeightVector(raw, norm) if weights is None else weights)
    if weights is None:
        weights = dynamic_weights(ad_table, mode)
    values = np.full((ka, ka), SENTINEL)
    if kv:
        inv = _inverse_similarity(vd_table, ad_table, weights, eps_d, mode)
        values[:kv] = np.where(np.isfinite(inv) & (inv > 0) & (inv < SENTINEL), inv, SENTINEL)
    return CostMatrix(values, kv), weights


_NO_WEIGHTS = np.zeros(0)


def build_cost_matrix(
    vd_table: NeighborTable,
    ad_table: NeighborTable,
    weights: Optional[WeightVector] = None,
    eps_d: float = EPS_D,
    mode: str = DEFAULT_MODE,
) -> CostMatrix:
    """Padded cost matrix; see :func:`similarity_stage`."""
    return similarity_stage(vd_table, ad_table, weights, eps_d, mode)[0]
