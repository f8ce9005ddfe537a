"""LoS path-loss / SINR channel: interference, outage and effective range.

Connectivity is deterministic: a node is an auditory-domain neighbour iff it
sits within the effective transmission distance, the range at which the
Rayleigh-fading outage probability still meets the constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import NodeId, RegionBounds, UavState


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Channel configuration in SI units.

    ``interference_unit_w`` is the per-interferer reference power in which the
    closed-form aggregate interference is expressed (the closed form counts
    equivalent unit-power interferers). 1e-3 reads it in milliwatts, the unit
    native to dBm figures; 1.0 reads it in watts.
    """

    alpha: float
    tx_power: float
    noise: float
    sinr_threshold: float
    outage_constraint: float
    safe_distance: float
    region: RegionBounds
    n_nodes: int
    interference_unit_w: float = 1e-3

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if math.isclose(self.alpha, 3.0, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError("alpha=3 makes the interference closed form singular (division by 3-alpha)")
        if not self.tx_power > 0:
            raise ValueError("tx_power must be positive")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if not self.sinr_threshold > 0:
            raise ValueError("sinr_threshold must be positive (linear)")
        if not 0.0 < self.outage_constraint < 1.0:
            raise ValueError("outage_constraint must lie in (0, 1)")
        if not self.safe_distance > 0:
            raise ValueError("safe_distance must be positive")
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be at least 1")
        if not self.interference_unit_w > 0:
            raise ValueError("interference_unit_w must be positive")


@dataclass(frozen=True)
class DerivedChannel:
    d_max: float
    n_equiv: float
    interference: float
    effective_range: float


def derive_channel(params: ChannelParams) -> DerivedChannel:
    r = params.region
    d_max = r.diagonal
    n_equiv = 4.0 * math.pi * d_max**3 * params.n_nodes / (3.0 * r.volume)
    a = params.alpha
    unit = (
        3.0 * n_equiv * (d_max ** (3.0 - a) - params.safe_distance ** (3.0 - a))
        / (2.0 * d_max**3 * (3.0 - a))
    )
    interference = unit * params.interference_unit_w
    denom = params.sinr_threshold * (params.noise + interference)
    if interference < 0 or denom <= 0:
        raise ValueError("nonpositive interference-plus-noise; check safe_distance against region size")
    d_r = (-params.tx_power * math.log(params.outage_constraint) / denom) ** (1.0 / a)
    if not d_r > 0:
        raise ValueError("computed effective range is not positive")
    return DerivedChannel(d_max=d_max, n_equiv=n_equiv, interference=interference, effective_range=d_r)


def outage_probability(d: float, params: ChannelParams, derived: DerivedChannel) -> float:
    """Probability that the SINR over a link of length ``d`` meets the threshold."""
    if d < 0:
        raise ValueError("distance must be nonnegative")
    return math.exp(
        -params.sinr_threshold * d**params.alpha * (params.noise + derived.interference) / params.tx_power
    )


def ad_neighbors(receiver: UavState, all_nodes: list[UavState], derived: DerivedChannel) -> list[NodeId]:
    """Identities a receiver hears: in-range physical nodes plus their Sybils."""
    heard: list[NodeId] = []
    rx = receiver.position.as_array()
    for node in all_nodes:
        if node.id == receiver.id:
            continue
        if np.linalg.norm(node.position.as_array() - rx) <= derived.effective_range:
            heard.append(node.id)
            heard.extend(node.sybil_ids)
    return heard
