"""Shared value types, 3-D geometry and the seeded randomness contract."""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

NodeId = int


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite Vec3 component: {self}")

    @classmethod
    def from_array(cls, arr) -> "Vec3":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


ZERO = Vec3(0.0, 0.0, 0.0)


class Role(enum.Enum):
    LEGITIMATE = "legitimate"
    MALICIOUS = "malicious"


@dataclass(frozen=True)
class RegionBounds:
    length: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if min(self.length, self.width, self.height) <= 0:
            raise ValueError("region dimensions must be positive")

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height], dtype=float)

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    @property
    def diagonal(self) -> float:
        return math.sqrt(self.length**2 + self.width**2 + self.height**2)

    def contains(self, p: Vec3, tol: float = 1e-9) -> bool:
        return (
            -tol <= p.x <= self.length + tol
            and -tol <= p.y <= self.width + tol
            and -tol <= p.z <= self.height + tol
        )

    def sample(self, rng: np.random.Generator) -> Vec3:
        return Vec3.from_array(rng.uniform(0.0, 1.0, 3) * self.upper)


@dataclass(frozen=True)
class UavState:
    """One physical UAV at one epoch.

    ``waypoint`` and ``pause_left`` are random-waypoint bookkeeping and are
    never broadcast.
    """

    id: NodeId
    position: Vec3
    velocity: Vec3
    role: Role = Role.LEGITIMATE
    sybil_ids: tuple[NodeId, ...] = ()
    waypoint: Optional[Vec3] = field(default=None, compare=False)
    pause_left: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        if self.sybil_ids and self.role is not Role.MALICIOUS:
            raise ValueError(f"node {self.id}: only malicious nodes own Sybil identities")

    @property
    def is_malicious(self) -> bool:
        return self.role is Role.MALICIOUS

    @property
    def speed(self) -> float:
        return self.velocity.norm()


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


@dataclass(frozen=True)
class RngSeed:
    """Root seed plus replicate stream index.

    Every consumer asks for a *named* stream, optionally keyed further (node id,
    epoch, ...). Streams are Philox generators built from a SeedSequence whose
    spawn key encodes ``(cell, stream, name, *keys)``, so any two distinct
    requests are statistically independent and fully reproducible.
    """

    seed: int
    stream: int = 0
    cell: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def generator(self, name: str, *keys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed,
            spawn_key=(self.cell, self.stream, _name_key(name), *(int(k) for k in keys)),
        )
        return np.random.Generator(np.random.Philox(ss))

    def for_replicate(self, replicate: int) -> "RngSeed":
        return RngSeed(self.seed, replicate, self.cell)


def distance(a: Vec3, b: Vec3) -> float:
    return (a - b).norm()


def relative_kinematics(observer: UavState, target_position: Vec3, target_velocity: Vec3) -> tuple[float, float]:
    """Relative distance (m) and relative speed (m/s) of a target seen from ``observer``."""
    return distance(observer.position, target_position), (observer.velocity - target_velocity).norm()
