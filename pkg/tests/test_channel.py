import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fanet_sybil.channel import ChannelParams, ad_neighbors, db_to_linear, dbm_to_watts, derive_channel, outage_probability
from fanet_sybil.core import RegionBounds

from conftest import make_node


def params(**kw):
    base = dict(
        alpha=2.0, tx_power=dbm_to_watts(30), noise=dbm_to_watts(-101), sinr_threshold=db_to_linear(-7),
        outage_constraint=0.8, safe_distance=5.0, region=RegionBounds(600, 600, 300), n_nodes=50,
    )
    base.update(kw)
    return ChannelParams(**base)


def test_unit_conversions():
    assert dbm_to_watts(30) == pytest.approx(1.0)
    assert dbm_to_watts(0) == pytest.approx(1e-3)
    assert db_to_linear(-10) == pytest.approx(0.1)


def test_max_distance_is_box_diagonal():
    assert derive_channel(params()).d_max == pytest.approx(900.0)


def test_effective_range_matches_step_by_step_evaluation():
    p = params()
    # independent evaluation, one formula per line
    L, W, H, N = 600.0, 600.0, 300.0, 50
    d_m = (L * L + W * W + H * H) ** 0.5
    n_e = 4 * math.pi * d_m**3 * N / (3 * L * W * H)
    n_i = 3 * n_e * (d_m ** (3 - 2) - 5.0 ** (3 - 2)) / (2 * d_m**3 * (3 - 2)) * 1e-3
    gamma = 10 ** (-0.7)
    n0 = 10 ** ((-101 - 30) / 10)
    d_r = (-1.0 * math.log(0.8) / (gamma * (n0 + n_i))) ** 0.5
    got = derive_channel(p)
    assert got.n_equiv == pytest.approx(n_e, rel=1e-12)
    assert got.interference == pytest.approx(n_i, rel=1e-12)
    assert got.effective_range == pytest.approx(d_r, rel=1e-12)


def test_interference_matches_radial_integral():
    # the closed form is (3 N_e / (2 D_m^3)) * integral of r^(2 - alpha) over [D_s, D_m]
    from scipy import integrate

    for alpha in (2.0, 2.5, 3.5, 4.0):
        p = params(alpha=alpha, interference_unit_w=1.0)
        d = derive_channel(p)
        integral, _ = integrate.quad(lambda r: r ** (2 - alpha), 5.0, d.d_max)
        assert d.interference == pytest.approx(3 * d.n_equiv / (2 * d.d_max**3) * integral, rel=1e-9)


def test_range_vanishes_as_constraint_tightens():
    ranges = [derive_channel(params(outage_constraint=p)).effective_range for p in (0.9, 0.99, 0.9999, 1 - 1e-12)]
    assert all(a > b for a, b in zip(ranges, ranges[1:]))
    # for alpha = 2 the range scales with sqrt(-ln P_th)
    assert ranges[-1] / ranges[0] == pytest.approx(math.sqrt(1e-12 / -math.log(0.9)), rel=1e-3)


def test_alpha_three_rejected():
    with pytest.raises(ValueError, match="singular"):
        params(alpha=3.0)


def test_outage_at_zero_and_at_range():
    p = params()
    d = derive_channel(p)
    assert outage_probability(0.0, p, d) == 1.0
    assert outage_probability(d.effective_range, p, d) == pytest.approx(0.8, rel=1e-12)


def test_outage_direct_evaluation():
    p = params()
    d = derive_channel(p)
    for dist in np.linspace(1, 2000, 17):
        expected = math.exp(-p.sinr_threshold * dist**2 * (p.noise + d.interference) / p.tx_power)
        assert outage_probability(dist, p, d) == pytest.approx(expected, rel=1e-12)


@given(
    st.floats(2.0, 2.9) | st.floats(3.1, 4.0),
    st.floats(-20, 40),
    st.floats(-10, -4),
    st.floats(0.5, 0.99),
    st.integers(2, 200),
)
def test_outage_equals_constraint_at_range(alpha, tx_dbm, sinr_db, p_th, n):
    p = params(alpha=alpha, tx_power=dbm_to_watts(tx_dbm), sinr_threshold=db_to_linear(sinr_db), outage_constraint=p_th, n_nodes=n)
    d = derive_channel(p)
    assert outage_probability(d.effective_range, p, d) == pytest.approx(p_th, rel=1e-12)


@given(st.floats(-20, 40), st.floats(0.1, 10), st.floats(-10, -4), st.floats(0.1, 5))
def test_range_monotone_in_power_and_threshold(tx_dbm, dpow, sinr_db, dth):
    lo = derive_channel(params(tx_power=dbm_to_watts(tx_dbm), sinr_threshold=db_to_linear(sinr_db))).effective_range
    more_power = derive_channel(params(tx_power=dbm_to_watts(tx_dbm + dpow), sinr_threshold=db_to_linear(sinr_db))).effective_range
    stricter = derive_channel(params(tx_power=dbm_to_watts(tx_dbm), sinr_threshold=db_to_linear(sinr_db + dth))).effective_range
    assert more_power > lo > stricter


def test_neighbors_examples():
    p = params()
    d = derive_channel(p)
    rx = make_node(0, (0, 0, 0))
    far = make_node(1, (d.effective_range + 1, 0, 0))
    assert ad_neighbors(rx, [rx, far], d) == []
    mal = make_node(1, (10, 0, 0), sybils=range(100, 110))
    heard = ad_neighbors(rx, [rx, mal], d)
    assert len(heard) == 11 and set(heard) == {1, *range(100, 110)}


def test_neighbors_brute_force():
    p = params(n_nodes=40)
    d = derive_channel(p)
    rng = np.random.default_rng(3)
    nodes = []
    for i in range(40):
        sybils = range(1000 + 10 * i, 1010 + 10 * i) if i % 7 == 0 else ()
        nodes.append(make_node(i, rng.uniform(0, [600, 600, 300]), sybils=sybils))
    for rx in nodes[:10]:
        heard = ad_neighbors(rx, nodes, d)
        in_range = [n for n in nodes if n.id != rx.id and math.dist(n.position.as_array(), rx.position.as_array()) <= d.effective_range]
        expected = [i for n in in_range for i in (n.id, *n.sybil_ids)]
        assert heard == expected
        assert len(heard) - len(in_range) == 10 * sum(n.is_malicious for n in in_range)
