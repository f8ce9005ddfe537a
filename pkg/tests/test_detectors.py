import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fanet_sybil.adversary import SybilIdentity
from fanet_sybil.channel import ChannelParams, db_to_linear, dbm_to_watts, derive_channel
from fanet_sybil.core import RegionBounds, Vec3
from fanet_sybil.detectors import (
    DetectionReport,
    GroundTruth,
    VAConfig,
    Verdict,
    detect_rssi,
    detect_va,
    detect_va_single,
    rssi_clusters,
    score,
)
from fanet_sybil.sensing import ErrorModel, beacons_heard, observe_ad, observe_vd

from conftest import ad_table, make_node, vd_table

REGION = RegionBounds(600.0, 600.0, 300.0)
DERIVED = derive_channel(ChannelParams(2.0, dbm_to_watts(30), dbm_to_watts(-101), db_to_linear(-7), 0.8, 5.0, REGION, 20))


def sybil_scene(seed=0, n_legit=4, n_sybil=10, model=None):
    rng = np.random.default_rng(seed)
    rx = make_node(0, (300, 300, 150), rng.uniform(-5, 5, 3))
    nodes = [rx] + [make_node(i, rng.uniform(200, 400, 3), rng.uniform(-10, 10, 3)) for i in range(1, n_legit + 1)]
    owner = make_node(99, rng.uniform(200, 400, 3), rng.uniform(-10, 10, 3), sybils=range(100, 100 + n_sybil))
    nodes.append(owner)
    claims = {99: [SybilIdentity(s, Vec3(*rng.uniform(150, 450, 3)), Vec3(*rng.uniform(-10, 10, 3)), 99) for s in owner.sybil_ids]}
    model = model or ErrorModel()
    ad = observe_ad(rx, beacons_heard(rx, nodes, claims, DERIVED), model, rng)
    vd = observe_vd(rx, nodes, model, DERIVED.effective_range, rng)
    return vd, ad


def test_clean_equal_tables_accuse_nobody():
    means = [[10.0, 1.0], [40.0, 3.0], [80.0, 0.5]]
    v = detect_va(vd_table(means), ad_table(means))
    assert v.accused == frozenset() and len(v.matches) == 3


def test_one_attacker_ten_sybils_four_legit():
    vd, ad = sybil_scene()
    for solver in ("hungarian", "balanced"):
        v = detect_va(vd, ad, VAConfig(solver=solver))
        assert v.accused == frozenset(range(100, 110))
        assert all(vd.ground_truth[i] == j for i, j in v.matches)


def test_detectors_never_read_ground_truth():
    vd, ad = sybil_scene(seed=1)
    blind_vd = dataclasses.replace(vd, ground_truth=())
    blind_ad = dataclasses.replace(ad, ground_truth=())
    assert detect_va(blind_vd, blind_ad) == detect_va(vd, ad)
    assert detect_rssi(blind_ad) == detect_rssi(ad)


@given(st.integers(0, 2**31), st.integers(0, 6), st.integers(1, 6))
def test_accusation_count_is_size_difference(seed, n_legit, n_sybil):
    vd, ad = sybil_scene(seed, n_legit, n_sybil)
    v = detect_va(vd, ad)
    assert len(v.accused) == len(ad) - len(vd)
    assert v.accused <= set(ad.identities)
    truth = GroundTruth.from_tables(vd, ad)
    r = score([v], [truth])
    assert r.tp + r.fp == r.tp + r.fn
    assert r.precision == r.recall


def test_premise_violation_flagged():
    v = detect_va(vd_table([[1.0, 1.0], [2.0, 2.0]]), ad_table([[1.0, 1.0]]))
    assert v.premise_violated and v.accused == frozenset() and v.matches is None


def test_single_characteristic_on_one_neighbor():
    vd, ad = vd_table([[12.0, 2.0]]), ad_table([[12.5, 2.1], [80.0, 7.0]])
    full = detect_va(vd, ad)
    assert detect_va_single(vd, ad, "distance").accused == full.accused
    with pytest.raises(ValueError):
        detect_va_single(vd, ad, "heading")


def test_velocity_only_ignores_distance():
    # speeds identify the pairs even though distances point the other way
    vd = vd_table([[10.0, 1.0], [50.0, 9.0]])
    ad = ad_table([[50.0, 1.0], [10.0, 9.0]])
    assert dict(detect_va_single(vd, ad, "velocity").matches) == {0: 0, 1: 1}
    assert dict(detect_va_single(vd, ad, "distance").matches) == {0: 1, 1: 0}


def test_rssi_examples():
    ad = ad_table([[0, 0]] * 4, ranging=[50.0, 51.0, 120.0, 200.0])
    assert detect_rssi(ad).accused == frozenset({0, 1})
    assert detect_rssi(ad, threshold=0.0).accused == frozenset()
    vd, ad = sybil_scene(seed=2)
    # Sybils share their owner's range; the owner itself joins that cluster too
    accused = detect_rssi(ad).accused
    assert set(range(100, 110)) <= accused
    with pytest.raises(ValueError):
        detect_rssi(ad_table([[0, 0]]))


@given(st.lists(st.floats(0, 500), max_size=30), st.floats(0, 10))
def test_rssi_clusters_single_linkage(ranges, eps):
    r = np.array(ranges)
    clusters = rssi_clusters(r, eps)
    assert sorted(np.concatenate(clusters).tolist() if clusters else []) == list(range(r.size))
    for c in clusters:
        vals = np.sort(r[c])
        assert np.all(np.diff(vals) <= eps)
    for a, b in zip(clusters, clusters[1:]):
        assert r[b].min() - r[a].max() > eps
    ad = ad_table(np.zeros((r.size, 2)), ranging=r)
    accused = detect_rssi(ad, eps).accused
    singles = {int(c[0]) for c in clusters if c.size == 1}
    assert not accused & singles


def test_score_arithmetic():
    truth = GroundTruth(frozenset(range(10)))
    v = Verdict(0, frozenset(list(range(8)) + [20, 21]), 0)
    r = score([v], [truth])
    assert (r.tp, r.fp, r.fn) == (8, 2, 2)
    assert r.precision == 0.8 and r.recall == 0.8
    assert r.matching_accuracy is None


def test_score_empty_denominators():
    r = score([Verdict(0, frozenset(), 0, ())], [GroundTruth(frozenset())])
    assert r.precision == 1.0 and r.recall == 1.0 and r.matching_accuracy == 1.0
    assert score([], []) == DetectionReport()


def test_micro_and_macro():
    truths = [GroundTruth(frozenset({1, 2})), GroundTruth(frozenset({3}))]
    verdicts = [Verdict(0, frozenset({1, 2}), 0), Verdict(1, frozenset({4}), 0)]
    micro = score(verdicts, truths)
    macro = score(verdicts, truths, "macro")
    assert micro.precision == pytest.approx(2 / 3)
    assert macro.precision == pytest.approx(0.5)
    with pytest.raises(ValueError):
        score(verdicts, truths, "weighted")
    with pytest.raises(ValueError):
        score(verdicts, truths[:1])


def test_matching_accuracy_counts_correct_pairs():
    truth = GroundTruth(frozenset(), vd_nodes=(7, 8))
    v = Verdict(0, frozenset(), 0, ((0, 7), (1, 9)))
    assert score([v], [truth]).matching_accuracy == 0.5
