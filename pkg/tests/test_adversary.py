import numpy as np
import pytest
from hypothesis import given, strategies as st

from fanet_sybil.adversary import AttackConfig, assign_roles, emit_sybil_claims, sample_in_range
from fanet_sybil.channel import ChannelParams, db_to_linear, dbm_to_watts, derive_channel
from fanet_sybil.core import RegionBounds
from fanet_sybil.mobility import MobilityConfig, initial_state, step

REGION = RegionBounds(600.0, 600.0, 300.0)


def derived(n=20):
    p = ChannelParams(2.0, dbm_to_watts(30), dbm_to_watts(-101), db_to_linear(-7), 0.8, 5.0, REGION, n)
    return derive_channel(p)


def fleet(n, seed=0):
    cfg = MobilityConfig(1.0, 10.0, REGION)
    rng = np.random.default_rng(seed)
    return [initial_state(i, cfg, rng) for i in range(n)], cfg


def test_malicious_count_rounds_and_rejects_empty_attack():
    assert AttackConfig(0.1).malicious_count(20) == 2
    assert AttackConfig(0.1).malicious_count(150) == 15
    assert AttackConfig(0.0).malicious_count(20) == 0
    with pytest.raises(ValueError):
        AttackConfig(0.01).malicious_count(20)
    with pytest.raises(ValueError):
        AttackConfig(sybils_per_malicious=0)


def test_roles_and_fresh_ids():
    nodes, _ = fleet(20)
    out = assign_roles(nodes, AttackConfig(0.1, 10), np.random.default_rng(1))
    mal = [n for n in out if n.is_malicious]
    assert len(mal) == 2
    ids = [i for n in mal for i in n.sybil_ids]
    assert len(ids) == len(set(ids)) == 20
    assert min(ids) > max(n.id for n in nodes)
    assert all(not n.sybil_ids for n in out if not n.is_malicious)


@given(st.integers(0, 2**31), st.floats(1.0, 400.0))
def test_sample_in_range_inside_ball_and_region(seed, radius):
    rng = np.random.default_rng(seed)
    center = REGION.sample(rng).as_array()
    p = sample_in_range(center, radius, REGION, rng)
    assert np.linalg.norm(p - center) <= radius + 1e-9
    assert np.all(p >= 0) and np.all(p <= REGION.upper)


def test_claims_stay_within_range_of_owner_over_time():
    d = derived()
    nodes, mob = fleet(10, seed=4)
    attack = AttackConfig(0.1, 10, attack_epoch=2)
    nodes = assign_roles(nodes, attack, np.random.default_rng(5))
    rng = np.random.default_rng(6)
    owner = next(n for n in nodes if n.is_malicious)
    assert emit_sybil_claims(owner, attack, d, rng, epoch=1, mobility=mob) == []
    prev = None
    for epoch in range(2, 60):
        claims = emit_sybil_claims(owner, attack, d, rng, epoch=epoch, mobility=mob, previous=prev)
        assert [c.id for c in claims] == list(owner.sybil_ids)
        for c in claims:
            assert c.owner == owner.id
            assert (c.claimed_position - owner.position).norm() <= d.effective_range * (1 + 1e-9)
            assert mob.v_min - 1e-9 <= c.claimed_velocity.norm() <= mob.v_max + 1e-9
        prev = claims
        owner = step(owner, mob, rng)


def test_legitimate_owner_rejected():
    nodes, mob = fleet(3)
    with pytest.raises(ValueError):
        emit_sybil_claims(nodes[0], AttackConfig(), derived(), np.random.default_rng(0), epoch=0, mobility=mob)
