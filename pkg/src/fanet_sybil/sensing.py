"""Noisy neighbour observations in the auditory (radio) and visual (sensor) domains."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .adversary import SybilIdentity
from .channel import DerivedChannel
from .core import NodeId, UavState, Vec3

CHARACTERISTICS = ("distance", "speed")


class Domain(enum.Enum):
    AD = "auditory"
    VD = "visual"


@dataclass(frozen=True)
class GaussianObservation:
    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mean):
            raise ValueError("observation mean must be finite")
        if not self.variance >= 0:
            raise ValueError("observation variance must be nonnegative")


CharacteristicVector = tuple[GaussianObservation, ...]


@dataclass(frozen=True)
class NoiseSpec:
    bias: float = 0.0
    std: float = 0.0

    def __post_init__(self) -> None:
        if self.std < 0:
            raise ValueError("noise std must be nonnegative")

    @property
    def variance(self) -> float:
        return self.std * self.std


@dataclass(frozen=True)
class ErrorModel:
    """Per-domain, per-characteristic additive Gaussian errors.

    ``variance_floor`` bounds the variance a detector attaches to an
    observation from below, so that a noiseless sensor still yields a proper
    density.
    """

    ad_distance: NoiseSpec = NoiseSpec(0.0, 1.0)
    ad_speed: NoiseSpec = NoiseSpec(0.0, 0.1)
    vd_distance: NoiseSpec = NoiseSpec(0.0, 0.3)
    vd_speed: NoiseSpec = NoiseSpec(0.0, 0.3)
    rssi: NoiseSpec = NoiseSpec(1.26, math.sqrt(0.86))
    variance_floor: float = 1e-6

    def __post_init__(self) -> None:
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")

    @classmethod
    def noiseless(cls) -> "ErrorModel":
        z = NoiseSpec(0.0, 0.0)
        return cls(z, z, z, z, z)

    def domain_specs(self, domain: Domain) -> tuple[NoiseSpec, NoiseSpec]:
        if domain is Domain.AD:
            return self.ad_distance, self.ad_speed
        return self.vd_distance, self.vd_speed

    def domain_variances(self, domain: Domain) -> np.ndarray:
        return np.array([max(s.variance, self.variance_floor) for s in self.domain_specs(domain)])


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Per-domain neighbour list.

    ``identities`` are broadcast NodeIds in the AD table and track indices in
    the VD table. ``ground_truth`` gives the physical node behind each entry
    (the owner for a Sybil identity); it is for scoring and must never be read
    by a detector.
    """

    domain: Domain
    identities: tuple[NodeId, ...]
    means: np.ndarray
    variances: np.ndarray
    ranging: Optional[np.ndarray] = None
    ground_truth: tuple[NodeId, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        k = len(self.identities)
        if self.means.shape != (k, len(CHARACTERISTICS)) or self.variances.shape != self.means.shape:
            raise ValueError("means/variances must be (K, K_f) arrays")
        if self.ranging is not None and self.ranging.shape != (k,):
            raise ValueError("ranging must hold one value per entry")

    def __len__(self) -> int:
        return len(self.identities)

    @property
    def n_characteristics(self) -> int:
        return self.means.shape[1]

    def characteristics(self, i: int) -> CharacteristicVector:
        return tuple(GaussianObservation(float(m), float(v)) for m, v in zip(self.means[i], self.variances[i]))

    @classmethod
    def empty(cls, domain: Domain) -> "NeighborTable":
        z = np.zeros((0, len(CHARACTERISTICS)))
        return cls(domain, (), z, z.copy(), np.zeros(0) if domain is Domain.AD else None, ())


class Beacon(NamedTuple):
    identity: NodeId
    position: Vec3
    velocity: Vec3
    source: NodeId
    source_position: Vec3


def beacons_heard(
    receiver: UavState,
    nodes: Sequence[UavState],
    claims: dict[NodeId, Sequence[SybilIdentity]],
    derived: DerivedChannel,
) -> list[Beacon]:
    """Every beacon reaching ``receiver``: in-range nodes' own beacons plus their Sybil claims."""
    out = []
    for node in nodes:
        if node.id == receiver.id or (node.position - receiver.position).norm() > derived.effective_range:
            continue
        out.append(Beacon(node.id, node.position, node.velocity, node.id, node.position))
        for c in claims.get(node.id, ()):
            out.append(Beacon(c.id, c.claimed_position, c.claimed_velocity, node.id, node.position))
    return out


def relative_arrays(rx_pos: np.ndarray, rx_vel: np.ndarray, pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Exact (distance, speed) of each target relative to the receiver, shape (K, 2)."""
    out = np.empty((pos.shape[0], 2))
    out[:, 0] = np.linalg.norm(pos - rx_pos, axis=1)
    out[:, 1] = np.linalg.norm(vel - rx_vel, axis=1)
    return out


def noisy(exact: np.ndarray, specs: Sequence[NoiseSpec], rng: np.random.Generator) -> np.ndarray:
    bias = np.array([s.bias for s in specs])
    std = np.array([s.std for s in specs])
    return exact + bias + std * rng.standard_normal(exact.shape)


def observe_ad(
    receiver: UavState,
    beacons: Sequence[Beacon],
    model: ErrorModel,
    rng: np.random.Generator,
    *,
    with_ranging: bool = True,
) -> NeighborTable:
    """AD table from heard beacons; kinematics are whatever each beacon claims."""
    if not beacons:
        return NeighborTable.empty(Domain.AD)
    return observe_ad_arrays(
        receiver.position.as_array(),
        receiver.velocity.as_array(),
        [b.identity for b in beacons],
        np.array([b.position.as_array() for b in beacons]),
        np.array([b.velocity.as_array() for b in beacons]),
        [b.source for b in beacons],
        np.array([b.source_position.as_array() for b in beacons]),
        model,
        rng,
        with_ranging=with_ranging,
    )


def observe_ad_arrays(rx_pos, rx_vel, identities, pos, vel, sources, source_pos, model, rng, *, with_ranging=True) -> NeighborTable:
    exact = relative_arrays(rx_pos, rx_vel, pos, vel)
    means = noisy(exact, model.domain_specs(Domain.AD), rng)
    ranging = ranging_arrays(rx_pos, source_pos, model, rng) if with_ranging else None
    variances = np.broadcast_to(model.domain_variances(Domain.AD), means.shape).copy()
    return NeighborTable(Domain.AD, tuple(int(i) for i in identities), means, variances, ranging, tuple(int(i) for i in sources))


def observe_vd(
    receiver: UavState,
    physical_nodes: Sequence[UavState],
    model: ErrorModel,
    vd_range: float,
    rng: np.random.Generator,
) -> NeighborTable:
    """VD table: one track per physical node within ``vd_range``. Sybils never show up here."""
    seen = [
        n for n in physical_nodes
        if n.id != receiver.id and (n.position - receiver.position).norm() <= vd_range
    ]
    if not seen:
        return NeighborTable.empty(Domain.VD)
    return observe_vd_arrays(
        receiver.position.as_array(),
        receiver.velocity.as_array(),
        [n.id for n in seen],
        np.array([n.position.as_array() for n in seen]),
        np.array([n.velocity.as_array() for n in seen]),
        model,
        rng,
    )


def observe_vd_arrays(rx_pos, rx_vel, node_ids, pos, vel, model, rng) -> NeighborTable:
    exact = relative_arrays(rx_pos, rx_vel, pos, vel)
    means = noisy(exact, model.domain_specs(Domain.VD), rng)
    variances = np.broadcast_to(model.domain_variances(Domain.VD), means.shape).copy()
    return NeighborTable(Domain.VD, tuple(range(len(node_ids))), means, variances, None, tuple(int(i) for i in node_ids))


def ranging_arrays(rx_pos: np.ndarray, source_pos: np.ndarray, model: ErrorModel, rng: np.random.Generator) -> np.ndarray:
    true = np.linalg.norm(source_pos - rx_pos, axis=1)
    return true + model.rssi.bias + model.rssi.std * rng.standard_normal(true.shape)


def measure_rssi_range(receiver: UavState, transmitter_position: Vec3, model: ErrorModel, rng: np.random.Generator) -> float:
    """RSSI range estimate. Pass the position the radio really transmits from (the owner's, for a Sybil)."""
    return float(ranging_arrays(receiver.position.as_array(), transmitter_position.as_array()[None, :], model, rng)[0])
