"""Built-in oracle checks, run by ``fanet-sybil verify``.

Each oracle compares a fast implementation against an independent slow one
(quadrature, enumeration, Monte-Carlo) at a scale that finishes in seconds.
Implementations can be swapped through keyword arguments, which is how the
checks themselves are tested against injected faults.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .channel import ChannelParams, derive_channel, outage_probability
from .core import RegionBounds, RngSeed
from .matcher import rank_key, solve_balanced, solve_exact, solve_hungarian
from .sensing import Domain, ErrorModel, GaussianObservation, NeighborTable, NoiseSpec, noisy
from .similarity import (
    SENTINEL,
    CostMatrix,
    distinguishability,
    distinguishability_from_similarity,
    js_divergence,
    js_similarity_arrays,
    kl_gaussian,
    mixture_similarity_arrays,
)


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    detail: str = ""


def _gauss_logpdf(x, mean, var):
    return -0.5 * (x - mean) ** 2 / var - 0.5 * math.log(2 * math.pi * var)


def kl_by_quadrature(a: GaussianObservation, b: GaussianObservation) -> float:
    """Relative entropy straight from its integral definition."""
    s = math.sqrt(a.variance)

    def f(x):
        la = _gauss_logpdf(x, a.mean, a.variance)
        return math.exp(la) * (la - _gauss_logpdf(x, b.mean, b.variance))

    val, _ = integrate.quad(f, a.mean - 40 * s, a.mean + 40 * s, points=[a.mean], limit=200, epsabs=1e-11)
    return val


def jsd_by_quadrature(a: GaussianObservation, b: GaussianObservation) -> float:
    """Jensen-Shannon divergence against the true equal-weight mixture, in nats."""
    lo = min(a.mean - 15 * math.sqrt(a.variance), b.mean - 15 * math.sqrt(b.variance))
    hi = max(a.mean + 15 * math.sqrt(a.variance), b.mean + 15 * math.sqrt(b.variance))

    def f(x):
        la, lb = _gauss_logpdf(x, a.mean, a.variance), _gauss_logpdf(x, b.mean, b.variance)
        lm = np.logaddexp(la, lb) - math.log(2)
        return 0.5 * math.exp(la) * (la - lm) + 0.5 * math.exp(lb) * (lb - lm)

    val, _ = integrate.quad(f, lo, hi, points=sorted({a.mean, b.mean}), limit=400, epsabs=1e-12)
    return val


def _random_pair(rng: np.random.Generator) -> tuple[GaussianObservation, GaussianObservation]:
    return (
        GaussianObservation(rng.uniform(-5, 5), rng.uniform(0.05, 4.0) ** 2),
        GaussianObservation(rng.uniform(-5, 5), rng.uniform(0.05, 4.0) ** 2),
    )


def check_kl(n: int = 300, seed: int = 1, kl: Callable = kl_gaussian, tol: float = 1e-6) -> OracleResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        a, b = _random_pair(rng)
        worst = max(worst, abs(kl(a, b) - kl_by_quadrature(a, b)))
    return OracleResult("kl-quadrature", bool(worst <= tol), f"max abs error {worst:.3g} over {n} pairs")


def check_moment_jsd(n: int = 300, seed: int = 2, tol: float = 1e-10) -> OracleResult:
    """Closed-form array similarity against the KL-based definition."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        a, b = _random_pair(rng)
        direct = 1.0 - min(js_divergence(a, b, "moment") / math.log(2), 1.0)
        fast = float(js_similarity_arrays(a.mean, a.variance, b.mean, b.variance))
        worst = max(worst, abs(direct - fast))
    return OracleResult("jsd-moment-closed-form", bool(worst <= tol), f"max abs error {worst:.3g}")


_STD_CHOICES = (0.3, 1.0, 0.1)


def check_mixture_jsd(n: int = 60, seed: int = 3, tol: float = 1e-5) -> OracleResult:
    """Tabulated mixture similarity against direct quadrature of the divergence."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        # a handful of std ratios (one table each), any scale and gap
        scale = rng.uniform(0.1, 5.0)
        sa, sb = scale * rng.choice(_STD_CHOICES), scale * rng.choice(_STD_CHOICES)
        mu = rng.uniform(-5, 5)
        a = GaussianObservation(mu, sa * sa)
        b = GaussianObservation(mu + rng.uniform(-8, 8) * math.hypot(sa, sb), sb * sb)
        exact = 1.0 - jsd_by_quadrature(a, b) / math.log(2)
        fast = float(mixture_similarity_arrays(a.mean, a.variance, b.mean, b.variance))
        worst = max(worst, abs(exact - fast))
    return OracleResult("jsd-mixture-quadrature", bool(worst <= tol), f"max abs error {worst:.3g}")


def check_distinguishability(n: int = 20, seed: int = 4, tol: float = 1e-9) -> OracleResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(2, 9))
        means = np.column_stack([rng.uniform(0, 10, k), rng.uniform(0, 3, k)])
        table = NeighborTable(Domain.AD, tuple(range(k)), means, np.full((k, 2), 0.5))
        sim = js_similarity_arrays(means[:, None, 0], 0.5, means[None, :, 0], 0.5)
        fast = distinguishability_from_similarity(sim)
        slow = np.array([distinguishability(j, 0, table, "moment") for j in range(k)])
        worst = max(worst, float(np.abs(fast - slow).max()))
    return OracleResult("distinguishability-direct", bool(worst <= tol), f"max abs error {worst:.3g}")


def random_padded_costs(rng: np.random.Generator, max_size: int = 8, sentinel_rate: float = 0.15) -> CostMatrix:
    m = int(rng.integers(1, max_size + 1))
    n = int(rng.integers(0, m + 1))
    values = np.full((m, m), SENTINEL)
    real = rng.uniform(0.5, 10.0, (n, m))
    real[rng.random((n, m)) < sentinel_rate] = SENTINEL
    values[:n] = real
    return CostMatrix(values, n)


def check_assignment(
    n: int = 120, seed: int = 5, max_size: int = 7, hungarian: Callable = solve_hungarian, balanced: Callable = solve_balanced
) -> OracleResult:
    rng = np.random.default_rng(seed)
    f1_fail = bal_hits = bal_worse = 0
    for _ in range(n):
        costs = random_padded_costs(rng, max_size)
        start = hungarian(costs)
        if not _same(_f1_key(costs, start), _enumerated_f1(costs)):
            f1_fail += 1
        found, best = rank_key(costs, balanced(costs)), rank_key(costs, solve_exact(costs))
        bal_hits += _same(found, best) or found < best
        bal_worse += found > rank_key(costs, start) and not _same(found, rank_key(costs, start))
    ok = f1_fail == 0 and bal_worse == 0 and bal_hits >= 0.95 * n
    return OracleResult(
        "assignment-enumeration", ok,
        f"hungarian f1 misses {f1_fail}, balanced optimal {bal_hits}/{n}, balanced worse than start {bal_worse}",
    )


def _same(a: tuple[int, float], b: tuple[int, float]) -> bool:
    return a[0] == b[0] and math.isclose(a[1], b[1], rel_tol=1e-9, abs_tol=1e-9)


def _f1_key(costs: CostMatrix, assignment) -> tuple[int, float]:
    c = costs.values[np.arange(assignment.n_real), list(assignment.real_columns)]
    sent = c >= SENTINEL
    return int(sent.sum()), float(c[~sent].sum())


def _enumerated_f1(costs: CostMatrix) -> tuple[int, float]:
    """Lexicographic (SENTINEL picks, finite f1) minimum over every injective map."""
    best = (costs.n_real + 1, math.inf)
    for perm in itertools.permutations(range(costs.size), costs.n_real):
        picks = costs.values[np.arange(costs.n_real), list(perm)]
        sent = picks >= SENTINEL
        best = min(best, (int(sent.sum()), float(picks[~sent].sum())))
    return best if costs.n_real else (0, 0.0)


def check_noise_moments(samples: int = 200_000, seed: int = 6, noisy_fn: Callable = noisy) -> OracleResult:
    """Sample mean and std of injected noise against the configured bias and std."""
    model = ErrorModel(NoiseSpec(0.4, 1.5), NoiseSpec(-0.2, 0.1), NoiseSpec(0.0, 0.3), NoiseSpec(0.1, 0.3))
    rng = RngSeed(seed).generator("verify")
    worst = 0.0
    for domain in (Domain.AD, Domain.VD):
        specs = model.domain_specs(domain)
        err = noisy_fn(np.zeros((samples, 2)), specs, rng)
        for k, spec in enumerate(specs):
            se = spec.std / math.sqrt(samples)
            worst = max(worst, abs(err[:, k].mean() - spec.bias) / max(se, 1e-12))
            rel = abs(err[:, k].std() / spec.std - 1.0) if spec.std else abs(err[:, k].std())
            worst = max(worst, rel / 0.01 * 4.0)
    return OracleResult("noise-moments", bool(worst <= 5.0), f"worst standardized deviation {worst:.2f} (limit 5)")


def check_channel(outage: Callable = outage_probability) -> OracleResult:
    region = RegionBounds(600.0, 600.0, 300.0)
    worst = 0.0
    for n in (20, 50, 150):
        for sinr_db in (-10.0, -7.0, -4.0):
            p = ChannelParams(2.0, 1.0, 10 ** (-13.1), 10 ** (sinr_db / 10), 0.8, 5.0, region, n)
            d = derive_channel(p)
            worst = max(worst, abs(outage(d.effective_range, p, d) - 0.8))
    return OracleResult("channel-range-root", bool(worst <= 1e-9), f"max |P_o(D_r) - P_th| {worst:.3g}")


ORACLES: dict[str, Callable[..., OracleResult]] = {
    "kl-quadrature": check_kl,
    "jsd-moment-closed-form": check_moment_jsd,
    "jsd-mixture-quadrature": check_mixture_jsd,
    "distinguishability-direct": check_distinguishability,
    "assignment-enumeration": check_assignment,
    "noise-moments": check_noise_moments,
    "channel-range-root": check_channel,
}


def run_all(overrides: Optional[dict[str, dict]] = None) -> list[OracleResult]:
    """Run every oracle; ``overrides`` maps an oracle name to keyword arguments for it."""
    overrides = overrides or {}
    out = []
    for name, fn in ORACLES.items():
        try:
            out.append(fn(**overrides.get(name, {})))
        except Exception as exc:  # a crashing oracle is a failing oracle
            out.append(OracleResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return out
