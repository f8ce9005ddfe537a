"""Scenario orchestration: epoch loop, per-receiver detection, replicate statistics."""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .adversary import AttackConfig, assign_roles, emit_sybil_claims
from .channel import ChannelParams, DerivedChannel, db_to_linear, dbm_to_watts, derive_channel
from .core import RegionBounds, RngSeed
from .detectors import (
    DETECTORS,
    DetectionReport,
    GroundTruth,
    VAConfig,
    Verdict,
    detect_rssi,
    detect_va,
    detect_va_single,
    score,
)
from .matcher import SOLVERS
from .mobility import MobilityConfig, initial_state, step
from .sensing import ErrorModel, NoiseSpec, observe_ad_arrays, observe_vd_arrays
from .similarity import DEFAULT_MODE, MODES

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` is the offending ``section.key``."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# section -> keys, in documentation order; every key is a ScenarioConfig field
SECTIONS: dict[str, tuple[str, ...]] = {
    "scenario": ("n_nodes", "duration_s", "sample_interval_s", "replicates", "seed", "detectors", "aggregation", "workers"),
    "region": ("length", "width", "height"),
    "mobility": ("v_min", "v_max", "waypoint_pause"),
    "channel": ("alpha", "p_th", "d_s", "tx_power_dbm", "noise_dbm", "sinr_db", "interference_unit_w"),
    "attack": ("p_m", "n_s", "attack_epoch"),
    "sensing": (
        "ad_distance_bias", "ad_distance_std", "ad_speed_bias", "ad_speed_std",
        "vd_distance_bias", "vd_distance_std", "vd_speed_bias", "vd_speed_std",
        "rssi_bias", "rssi_variance", "rssi_std", "variance_floor", "vd_range",
    ),
    "detection": ("solver", "budget", "rssi_threshold", "eps_d", "similarity", "f2"),
}
FIELD_SECTION = {k: s for s, keys in SECTIONS.items() for k in keys}


@dataclass(frozen=True)
class ScenarioConfig:
    """Flat scenario description; typed sub-configs are derived on demand."""

    n_nodes: int = 50
    duration_s: float = 300.0
    sample_interval_s: float = 2.0
    replicates: int = 20
    seed: int = 0
    detectors: tuple[str, ...] = DETECTORS
    aggregation: str = "micro"
    workers: int = 1

    length: float = 600.0
    width: float = 600.0
    height: float = 300.0

    v_min: float = 5.0
    v_max: float = 15.0
    waypoint_pause: float = 0.0

    alpha: float = 2.0
    p_th: float = 0.8
    d_s: float = 5.0
    tx_power_dbm: float = 30.0
    noise_dbm: float = -101.0
    sinr_db: float = -7.0
    interference_unit_w: float = 1e-3

    p_m: float = 0.1
    n_s: int = 10
    attack_epoch: int = 0

    ad_distance_bias: float = 0.0
    ad_distance_std: float = 1.0
    ad_speed_bias: float = 0.0
    ad_speed_std: float = 0.1
    vd_distance_bias: float = 0.0
    vd_distance_std: float = 0.3
    vd_speed_bias: float = 0.0
    vd_speed_std: float = 0.3
    rssi_bias: float = 1.26
    rssi_variance: float = 0.86
    rssi_std: Optional[float] = None
    variance_floor: float = 1e-6
    vd_range: Optional[float] = None

    solver: str = "balanced"
    budget: int = 200
    rssi_threshold: float = 3.0
    eps_d: float = 1e-9
    similarity: str = DEFAULT_MODE
    f2: str = "mean"

    cell_index: int = field(default=0, compare=False)

    @property
    def region(self) -> RegionBounds:
        return RegionBounds(self.length, self.width, self.height)

    @property
    def attack(self) -> AttackConfig:
        return AttackConfig(self.p_m, self.n_s, self.attack_epoch)

    @property
    def error_model(self) -> ErrorModel:
        rssi_std = self.rssi_std if self.rssi_std is not None else math.sqrt(self.rssi_variance)
        return ErrorModel(
            NoiseSpec(self.ad_distance_bias, self.ad_distance_std),
            NoiseSpec(self.ad_speed_bias, self.ad_speed_std),
            NoiseSpec(self.vd_distance_bias, self.vd_distance_std),
            NoiseSpec(self.vd_speed_bias, self.vd_speed_std),
            NoiseSpec(self.rssi_bias, rssi_std),
            self.variance_floor,
        )

    @property
    def channel_params(self) -> ChannelParams:
        return ChannelParams(
            alpha=self.alpha,
            tx_power=dbm_to_watts(self.tx_power_dbm),
            noise=dbm_to_watts(self.noise_dbm),
            sinr_threshold=db_to_linear(self.sinr_db),
            outage_constraint=self.p_th,
            safe_distance=self.d_s,
            region=self.region,
            n_nodes=self.n_nodes,
            interference_unit_w=self.interference_unit_w,
        )

    @property
    def mobility(self) -> MobilityConfig:
        return MobilityConfig(self.v_min, self.v_max, self.region, self.sample_interval_s, self.waypoint_pause)

    @property
    def va_config(self) -> VAConfig:
        return VAConfig(self.solver, self.budget, self.eps_d, self.similarity, self.f2 == "literal")

    @property
    def n_epochs(self) -> int:
        return int(round(self.duration_s / self.sample_interval_s))

    def validate(self) -> "ScenarioConfig":
        """Raise ConfigError naming the first offending ``section.key``."""

        def fail(key, msg):
            raise ConfigError(f"{FIELD_SECTION.get(key, 'scenario')}.{key}", msg)

        if self.n_nodes < 2:
            fail("n_nodes", "need at least 2 nodes")
        if self.replicates < 1:
            fail("replicates", "must be at least 1")
        if self.workers < 1:
            fail("workers", "must be at least 1")
        if not 0 <= self.seed < 2**64:
            fail("seed", "must be a 64-bit unsigned integer")
        if self.sample_interval_s <= 0 or self.duration_s <= 0:
            fail("sample_interval_s", "duration and interval must be positive")
        ratio = self.duration_s / self.sample_interval_s
        if abs(ratio - round(ratio)) > 1e-9:
            fail("duration_s", f"duration {self.duration_s} is not a whole number of {self.sample_interval_s} s intervals")
        unknown = [d for d in self.detectors if d not in DETECTORS]
        if unknown or not self.detectors:
            fail("detectors", f"unknown or empty detector list {list(self.detectors)}; choose from {DETECTORS}")
        if self.aggregation not in ("micro", "macro"):
            fail("aggregation", "must be micro or macro")
        if self.solver not in SOLVERS:
            fail("solver", f"must be one of {SOLVERS}")
        if self.similarity not in MODES:
            fail("similarity", f"must be one of {MODES}")
        if self.f2 not in ("mean", "literal"):
            fail("f2", "must be mean or literal")
        if self.budget < 1:
            fail("budget", "must be at least 1")
        if self.rssi_threshold < 0:
            fail("rssi_threshold", "must be nonnegative")
        if self.vd_range is not None and self.vd_range <= 0:
            fail("vd_range", "must be positive")
        if self.rssi_std is None and self.rssi_variance < 0:
            fail("rssi_variance", "must be nonnegative")
        for key, build in (
            ("length", lambda: self.region),
            ("v_min", lambda: self.mobility),
            ("p_m", lambda: self.attack),
            ("ad_distance_std", lambda: self.error_model),
        ):
            try:
                build()
            except ValueError as exc:
                fail(key, str(exc))
        try:
            self.attack.malicious_count(self.n_nodes)
        except ValueError as exc:
            fail("p_m", str(exc))
        try:
            derive_channel(self.channel_params)
        except ValueError as exc:
            fail("alpha" if "alpha" in str(exc) else "sinr_db", str(exc))
        return self


def apply_overrides(cfg: ScenarioConfig, overrides: Mapping[str, Any]) -> ScenarioConfig:
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    bad = [k for k in overrides if k not in names]
    if bad:
        raise ConfigError(bad[0], "unknown configuration key")
    return dataclasses.replace(cfg, **dict(overrides))


# ---------------------------------------------------------------- results


def mean_ci90(values: Sequence[float]) -> tuple[float, Optional[float]]:
    """Mean and Student-t 90% half-width (None with fewer than two values)."""
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    sem = float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return mean, float(stats.t.ppf(0.95, arr.size - 1) * sem)


@dataclass
class ReplicateResult:
    replicate: int
    reports: dict[str, DetectionReport]
    epoch_reports: dict[str, list[DetectionReport]]
    count_identity_holds: bool = True
    premise_violations: int = 0
    mean_k_a: float = 0.0
    mean_k_v: float = 0.0


@dataclass
class MetricSummary:
    mean: float
    ci90: Optional[float]


@dataclass
class DetectorSummary:
    name: str
    precision: MetricSummary
    recall: MetricSummary
    matching_accuracy: Optional[MetricSummary]


@dataclass
class RunResult:
    config: ScenarioConfig
    epochs: int
    replicates: list[ReplicateResult]
    summaries: dict[str, DetectorSummary]
    derived: DerivedChannel


def _summarize(name: str, reps: Sequence[ReplicateResult]) -> DetectorSummary:
    reports = [r.reports[name] for r in reps]
    acc = None
    if reports[0].matching_accuracy is not None:
        acc = MetricSummary(*mean_ci90([r.matching_accuracy for r in reports]))
    return DetectorSummary(
        name,
        MetricSummary(*mean_ci90([r.precision for r in reports])),
        MetricSummary(*mean_ci90([r.recall for r in reports])),
        acc,
    )


# ---------------------------------------------------------------- simulation


def _detect(name: str, vd, ad, cfg: ScenarioConfig, va: VAConfig, receiver: int, epoch: int) -> Verdict:
    if name == "va":
        return detect_va(vd, ad, va, receiver=receiver, epoch=epoch)
    if name == "va_distance":
        return detect_va_single(vd, ad, "distance", va, receiver=receiver, epoch=epoch)
    if name == "va_velocity":
        return detect_va_single(vd, ad, "velocity", va, receiver=receiver, epoch=epoch)
    return detect_rssi(ad, cfg.rssi_threshold, receiver=receiver, epoch=epoch)


def run_replicate(cfg: ScenarioConfig, replicate: int) -> ReplicateResult:
    """One independent replicate: initial placement, role assignment, then the epoch loop."""
    seed = RngSeed(cfg.seed, replicate, cfg.cell_index)
    derived = derive_channel(cfg.channel_params)
    d_r = derived.effective_range
    vd_range = cfg.vd_range if cfg.vd_range is not None else d_r
    mob = cfg.mobility
    attack = cfg.attack
    model = cfg.error_model
    va = cfg.va_config

    nodes = [initial_state(i, mob, seed.generator("init", i)) for i in range(cfg.n_nodes)]
    nodes = assign_roles(nodes, attack, seed.generator("roles"))
    move_rngs = [seed.generator("mobility", n.id) for n in nodes]
    sybil_rngs = {n.id: seed.generator("sybil", n.id) for n in nodes if n.is_malicious}
    node_ids = np.array([n.id for n in nodes])
    claims: dict[int, list] = {}

    verdicts: dict[str, list[list[Verdict]]] = {d: [] for d in cfg.detectors}
    truths: list[list[GroundTruth]] = []
    identity_ok = True
    violations = 0
    k_a_sum = k_v_sum = events = 0

    for epoch in range(cfg.n_epochs):
        nodes = [step(n, mob, rng) for n, rng in zip(nodes, move_rngs)]
        pos = np.array([n.position.as_array() for n in nodes])
        vel = np.array([n.velocity.as_array() for n in nodes])

        s_ids, s_owner, s_pos, s_vel = [], [], [], []
        for idx, n in enumerate(nodes):
            if not n.is_malicious:
                continue
            claims[n.id] = emit_sybil_claims(
                n, attack, derived, sybil_rngs[n.id], epoch=epoch, mobility=mob, previous=claims.get(n.id)
            )
            for c in claims[n.id]:
                s_ids.append(c.id)
                s_owner.append(idx)
                s_pos.append(c.claimed_position.as_array())
                s_vel.append(c.claimed_velocity.as_array())
        s_ids_a = np.array(s_ids, dtype=int)
        s_owner_a = np.array(s_owner, dtype=int)
        s_pos_a = np.array(s_pos).reshape(-1, 3)
        s_vel_a = np.array(s_vel).reshape(-1, 3)

        epoch_truths: list[GroundTruth] = []
        epoch_verdicts: dict[str, list[Verdict]] = {d: [] for d in cfg.detectors}
        for r, rx in enumerate(nodes):
            if rx.is_malicious:
                continue
            d = np.linalg.norm(pos - pos[r], axis=1)
            d[r] = np.inf
            heard = d <= d_r
            if not heard.any():
                continue
            rng = seed.generator("sensing", epoch, rx.id)
            phys = np.flatnonzero(heard)
            syb = np.flatnonzero(heard[s_owner_a]) if s_owner_a.size else np.zeros(0, dtype=int)
            ids = np.concatenate([node_ids[phys], s_ids_a[syb]])
            src = np.concatenate([phys, s_owner_a[syb]])
            a_pos = np.concatenate([pos[phys], s_pos_a[syb]])
            a_vel = np.concatenate([vel[phys], s_vel_a[syb]])
            order = rng.permutation(ids.size)
            ad = observe_ad_arrays(
                pos[r], vel[r], ids[order], a_pos[order], a_vel[order], node_ids[src[order]], pos[src[order]],
                model, rng, with_ranging="rssi" in cfg.detectors,
            )
            seen = np.flatnonzero(d <= vd_range)
            seen = seen[rng.permutation(seen.size)]
            vd = observe_vd_arrays(pos[r], vel[r], node_ids[seen], pos[seen], vel[seen], model, rng)

            truth = GroundTruth.from_tables(vd, ad)
            epoch_truths.append(truth)
            k_a_sum += len(ad)
            k_v_sum += len(vd)
            events += 1
            for name in cfg.detectors:
                v = _detect(name, vd, ad, cfg, va, rx.id, epoch)
                if v.premise_violated:
                    violations += 1
                elif name == "va" and len(v.accused) != len(ad) - len(vd):
                    identity_ok = False
                epoch_verdicts[name].append(v)
        truths.append(epoch_truths)
        for name in cfg.detectors:
            verdicts[name].append(epoch_verdicts[name])

    reports, epoch_reports = {}, {}
    flat_truths = [t for ep in truths for t in ep]
    for name in cfg.detectors:
        epoch_reports[name] = [score(v, t, cfg.aggregation) for v, t in zip(verdicts[name], truths)]
        flat = [v for ep in verdicts[name] for v in ep]
        reports[name] = score(flat, flat_truths, cfg.aggregation)
    return ReplicateResult(
        replicate,
        reports,
        epoch_reports,
        count_identity_holds=identity_ok,
        premise_violations=violations,
        mean_k_a=k_a_sum / events if events else 0.0,
        mean_k_v=k_v_sum / events if events else 0.0,
    )


def _replicate_job(args) -> ReplicateResult:
    cfg, r = args
    return run_replicate(cfg, r)


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """All replicates of one scenario, merged in replicate order."""
    cfg.validate()
    jobs = [(cfg, r) for r in range(cfg.replicates)]
    if cfg.workers > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reps = list(pool.map(_replicate_job, jobs))
    else:
        reps = [_replicate_job(j) for j in jobs]
    summaries = {name: _summarize(name, reps) for name in cfg.detectors}
    log.info("cell %d: %d replicates x %d epochs done", cfg.cell_index, cfg.replicates, cfg.n_epochs)
    return RunResult(cfg, cfg.n_epochs, reps, summaries, derive_channel(cfg.channel_params))


def run_sweep(base: ScenarioConfig, grid: Sequence[Mapping[str, Any]]) -> list[RunResult]:
    """One RunResult per grid cell; cell ``i`` draws from seed streams keyed by ``i``."""
    if not grid:
        raise ConfigError("grid", "empty grid")
    cells = [dataclasses.replace(apply_overrides(base, g), cell_index=i).validate() for i, g in enumerate(grid)]
    return [run_scenario(c) for c in cells]
