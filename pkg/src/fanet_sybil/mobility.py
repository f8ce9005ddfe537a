"""Random-waypoint mobility inside a box region."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ZERO, NodeId, RegionBounds, UavState, Vec3


@dataclass(frozen=True)
class MobilityConfig:
    v_min: float
    v_max: float
    region: RegionBounds
    dt: float = 2.0
    waypoint_pause: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.v_min <= self.v_max:
            raise ValueError("speeds must satisfy 0 < v_min <= v_max")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.waypoint_pause < 0:
            raise ValueError("waypoint_pause must be nonnegative")

    def draw_speed(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.v_min, self.v_max))


def advance_toward(pos: np.ndarray, waypoint: np.ndarray, speed: float, dt: float) -> tuple[np.ndarray, bool]:
    """Move ``speed * dt`` toward ``waypoint``; snap onto it when reachable this step."""
    delta = waypoint - pos
    remaining = float(np.linalg.norm(delta))
    travel = speed * dt
    if travel >= remaining:
        return waypoint.copy(), True
    return pos + delta * (travel / remaining), False


def heading_velocity(pos: np.ndarray, waypoint: np.ndarray, speed: float) -> np.ndarray:
    delta = waypoint - pos
    n = float(np.linalg.norm(delta))
    return delta * (speed / n)


def draw_leg(pos: np.ndarray, sample_waypoint, cfg: MobilityConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw a fresh (waypoint, velocity) pair; degenerate zero-length legs are redrawn."""
    while True:
        wp = sample_waypoint(rng)
        if np.linalg.norm(wp - pos) > 1e-9:
            break
    return wp, heading_velocity(pos, wp, cfg.draw_speed(rng))


def initial_state(node_id: NodeId, cfg: MobilityConfig, rng: np.random.Generator) -> UavState:
    pos = cfg.region.sample(rng).as_array()
    wp, vel = draw_leg(pos, lambda g: cfg.region.sample(g).as_array(), cfg, rng)
    return UavState(id=node_id, position=Vec3.from_array(pos), velocity=Vec3.from_array(vel), waypoint=Vec3.from_array(wp))


def step(state: UavState, cfg: MobilityConfig, rng: np.random.Generator) -> UavState:
    """Advance one node by ``cfg.dt``.

    A node that reaches its waypoint within the step stops there and draws the
    next waypoint and speed (after ``waypoint_pause`` seconds at rest, if set).
    """
    region_sample = lambda g: cfg.region.sample(g).as_array()  # noqa: E731
    pos = state.position.as_array()
    if state.pause_left > 0:
        left = state.pause_left - cfg.dt
        if left > 1e-12:
            return replace(state, velocity=ZERO, pause_left=left)
        wp, vel = draw_leg(pos, region_sample, cfg, rng)
        return replace(state, velocity=Vec3.from_array(vel), waypoint=Vec3.from_array(wp), pause_left=0.0)

    speed = state.speed
    if state.waypoint is None or speed <= 0:
        wp, vel = draw_leg(pos, region_sample, cfg, rng)
        speed = float(np.linalg.norm(vel))
    else:
        wp = state.waypoint.as_array()

    new_pos, arrived = advance_toward(pos, wp, speed, cfg.dt)
    new_pos = np.clip(new_pos, 0.0, cfg.region.upper)
    if not arrived:
        vel = heading_velocity(pos, wp, speed)
        return replace(state, position=Vec3.from_array(new_pos), velocity=Vec3.from_array(vel), waypoint=Vec3.from_array(wp))

    if cfg.waypoint_pause > 0:
        return replace(state, position=Vec3.from_array(new_pos), velocity=ZERO, pause_left=cfg.waypoint_pause)
    next_wp, vel = draw_leg(new_pos, region_sample, cfg, rng)
    return replace(state, position=Vec3.from_array(new_pos), velocity=Vec3.from_array(vel), waypoint=Vec3.from_array(next_wp))

