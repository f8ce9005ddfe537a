import numpy as np
import pytest
from hypothesis import given, strategies as st

from fanet_sybil.core import RegionBounds
from fanet_sybil.mobility import MobilityConfig, advance_toward, initial_state, step

REGION = RegionBounds(600.0, 600.0, 300.0)


def test_config_validation():
    with pytest.raises(ValueError):
        MobilityConfig(0.0, 10.0, REGION)
    with pytest.raises(ValueError):
        MobilityConfig(12.0, 10.0, REGION)
    with pytest.raises(ValueError):
        MobilityConfig(1.0, 10.0, REGION, dt=0.0)


def test_advance_toward_snaps_on_arrival():
    pos, arrived = advance_toward(np.zeros(3), np.array([3.0, 4.0, 0.0]), 10.0, 1.0)
    assert arrived and np.array_equal(pos, [3.0, 4.0, 0.0])
    pos, arrived = advance_toward(np.zeros(3), np.array([30.0, 40.0, 0.0]), 5.0, 2.0)
    assert not arrived
    np.testing.assert_allclose(pos, [6.0, 8.0, 0.0])


@given(st.integers(0, 2**31), st.floats(1.0, 20.0), st.floats(0.0, 10.0), st.floats(0.5, 4.0))
def test_trajectory_stays_in_region_within_speed_bounds(seed, v_min, extra, dt):
    cfg = MobilityConfig(v_min, v_min + extra, REGION, dt=dt)
    rng = np.random.default_rng(seed)
    s = initial_state(0, cfg, rng)
    for _ in range(30):
        assert REGION.contains(s.position)
        assert cfg.v_min - 1e-9 <= s.speed <= cfg.v_max + 1e-9
        nxt = step(s, cfg, rng)
        # displacement never exceeds the travel allowed by the speed of the leg
        assert np.linalg.norm(nxt.position.as_array() - s.position.as_array()) <= s.speed * dt + 1e-9
        s = nxt


def test_pause_holds_position():
    cfg = MobilityConfig(5.0, 5.0, REGION, dt=2.0, waypoint_pause=4.0)
    rng = np.random.default_rng(7)
    s = initial_state(0, cfg, rng)
    paused = 0
    for _ in range(400):
        nxt = step(s, cfg, rng)
        if s.pause_left > 0 and nxt.pause_left > 0:
            paused += 1
            assert nxt.position == s.position and nxt.speed == 0
        s = nxt
    assert paused > 0


def test_step_is_deterministic_given_stream():
    cfg = MobilityConfig(2.0, 10.0, REGION)
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(11)
        s = initial_state(3, cfg, rng)
        for _ in range(50):
            s = step(s, cfg, rng)
        runs.append(s)
    assert runs[0] == runs[1]
