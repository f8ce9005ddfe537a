"""Attack model: malicious node selection and fabricated Sybil beacons.

Each Sybil identity flies its own virtual random-waypoint trajectory kept
inside the owner's radio range, so its beacons look like any other UAV's in
the auditory domain. Only the cross-check against what is physically sensed
can expose it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .channel import DerivedChannel
from .core import NodeId, RegionBounds, Role, UavState, Vec3
from .mobility import MobilityConfig, advance_toward, heading_velocity


@dataclass(frozen=True)
class AttackConfig:
    malicious_fraction: float = 0.1
    sybils_per_malicious: int = 10
    attack_epoch: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.malicious_fraction < 1.0:
            raise ValueError("malicious_fraction must lie in [0, 1)")
        if self.sybils_per_malicious < 1:
            raise ValueError("sybils_per_malicious must be at least 1")
        if self.attack_epoch < 0:
            raise ValueError("attack_epoch must be nonnegative")

    def malicious_count(self, n_nodes: int) -> int:
        expected = self.malicious_fraction * n_nodes
        if self.malicious_fraction > 0 and expected < 1:
            raise ValueError(
                f"malicious_fraction={self.malicious_fraction} with {n_nodes} nodes yields no attacker"
            )
        return int(math.floor(expected + 0.5))


@dataclass(frozen=True)
class SybilIdentity:
    id: NodeId
    claimed_position: Vec3
    claimed_velocity: Vec3
    owner: NodeId
    waypoint: Optional[Vec3] = field(default=None, compare=False, repr=False)


def assign_roles(nodes: Sequence[UavState], cfg: AttackConfig, rng: np.random.Generator) -> list[UavState]:
    """Mark ``round(P_m * N)`` uniformly chosen nodes malicious and give each fresh Sybil ids.

    Sybil ids start just above the largest physical id, so they never collide
    with a real identity.
    """
    n_mal = cfg.malicious_count(len(nodes))
    chosen = set(int(i) for i in rng.choice(len(nodes), size=n_mal, replace=False)) if n_mal else set()
    next_id = max((n.id for n in nodes), default=-1) + 1
    out = []
    for idx, node in enumerate(nodes):
        if idx in chosen:
            ids = tuple(range(next_id, next_id + cfg.sybils_per_malicious))
            next_id += cfg.sybils_per_malicious
            out.append(replace(node, role=Role.MALICIOUS, sybil_ids=ids))
        else:
            out.append(replace(node, role=Role.LEGITIMATE, sybil_ids=()))
    return out


def sample_in_range(center: np.ndarray, radius: float, region: RegionBounds, rng: np.random.Generator) -> np.ndarray:
    """Uniform point in the ball around ``center`` clipped to the region."""
    lo = np.maximum(center - radius, 0.0)
    hi = np.minimum(center + radius, region.upper)
    while True:
        pts = rng.uniform(lo, hi, size=(16, 3))
        ok = np.einsum("ij,ij->i", pts - center, pts - center) <= radius * radius
        if ok.any():
            return pts[int(np.argmax(ok))]


def emit_sybil_claims(
    owner: UavState,
    cfg: AttackConfig,
    derived: DerivedChannel,
    rng: np.random.Generator,
    *,
    epoch: int,
    mobility: MobilityConfig,
    previous: Optional[Sequence[SybilIdentity]] = None,
) -> list[SybilIdentity]:
    """Beacon claims of every Sybil identity owned by ``owner`` at ``epoch``.

    All identities appear together from ``cfg.attack_epoch`` on. Pass the
    previous epoch's claims as ``previous`` to continue their trajectories;
    without it fresh claims are seeded around the owner.
    """
    if not owner.is_malicious:
        raise ValueError(f"node {owner.id} is not malicious")
    if epoch < cfg.attack_epoch:
        return []
    radius = derived.effective_range
    region = mobility.region
    center = owner.position.as_array()

    def fresh_leg(pos):
        wp = sample_in_range(center, radius, region, rng)
        while np.linalg.norm(wp - pos) <= 1e-9:
            wp = sample_in_range(center, radius, region, rng)
        return wp, heading_velocity(pos, wp, mobility.draw_speed(rng))

    claims = []
    if not previous:
        for sid in owner.sybil_ids:
            pos = sample_in_range(center, radius, region, rng)
            wp, vel = fresh_leg(pos)
            claims.append(_claim(sid, pos, vel, owner.id, wp))
        return claims

    by_id = {c.id: c for c in previous}
    for sid in owner.sybil_ids:
        prev = by_id[sid]
        pos = prev.claimed_position.as_array()
        wp = prev.waypoint.as_array()
        speed = prev.claimed_velocity.norm()
        pos, arrived = advance_toward(pos, wp, speed, mobility.dt)
        offset = pos - center
        dist = float(np.linalg.norm(offset))
        escaped = dist > radius
        if escaped:
            # the owner moved away: pull the claim back to the edge of its range
            pos = center + offset * (radius * (1.0 - 1e-9) / dist)
        if arrived or escaped:
            wp, vel = fresh_leg(pos)
        else:
            vel = heading_velocity(pos, wp, speed)
        claims.append(_claim(sid, pos, vel, owner.id, wp))
    return claims


def _claim(sid, pos, vel, owner_id, wp) -> SybilIdentity:
    return SybilIdentity(
        id=sid,
        claimed_position=Vec3.from_array(pos),
        claimed_velocity=Vec3.from_array(vel),
        owner=owner_id,
        waypoint=Vec3.from_array(wp),
    )
