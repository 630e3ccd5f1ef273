import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sliceq.config import HarqConfig, default_scenario
from sliceq.radio import (
    DelayBreakdown,
    channel_gain_db,
    link_capacity,
    noise_power_dbm,
    path_loss,
    retx_delay,
    sinr,
    tx_delay,
    ue_sinr,
    place_ues,
)

TTI = 0.1429


def test_path_loss_reference_points():
    assert path_loss(1.0) == pytest.approx(128.1, abs=1e-12)
    # independent evaluation through natural logs
    expected = 128.1 + 37.6 * (np.log(0.125) / np.log(10.0))
    assert expected == pytest.approx(94.144, abs=1e-3)
    assert path_loss(0.125) == pytest.approx(94.144, abs=1e-3)
    assert path_loss(0.010) == pytest.approx(52.9, abs=0.1)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_path_loss_domain(d):
    with pytest.raises(ValueError):
        path_loss(d)


@given(st.floats(1e-4, 10), st.floats(1e-4, 10))
def test_path_loss_increasing(a, b):
    if a < b:
        assert path_loss(a) < path_loss(b)


def test_sinr_cases():
    noise_dbm = -100.0
    noise_mw = 10 ** (noise_dbm / 10)
    # p*q equal to the noise power
    gain = noise_mw / 10 ** (20.0 / 10)
    assert sinr(gain, 20.0, [], noise_dbm) == pytest.approx(1.0, rel=1e-12)
    # one interferer contributing exactly the noise power
    assert sinr(gain, 20.0, [(noise_dbm, 1.0)], noise_dbm) == pytest.approx(0.5, rel=1e-12)
    # vanishing interferer gain tends to the no-interferer value
    assert sinr(gain, 20.0, [(20.0, 1e-30)], noise_dbm) == pytest.approx(1.0, rel=1e-9)


def test_sinr_monotone_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        g = 10 ** rng.uniform(-14, -6)
        p = rng.uniform(0, 46)
        n_int = rng.integers(1, 4)
        inter = [(rng.uniform(0, 46), 10 ** rng.uniform(-14, -6)) for _ in range(n_int)]
        base = sinr(g, p, inter, -110.0)
        assert sinr(g * 1.5, p, inter, -110.0) > base
        k = rng.integers(n_int)
        louder = list(inter)
        louder[k] = (inter[k][0] + 1.0, inter[k][1])
        assert sinr(g, p, louder, -110.0) < base


def test_link_capacity_cases():
    assert link_capacity([0], [1.0], 180e3) == 180e3
    assert link_capacity([], [], 180e3) == 0
    assert link_capacity([0, 1], [1.0, 3.0], 180e3) == pytest.approx(540e3, rel=1e-12)
    with pytest.raises(ValueError):
        link_capacity([0, 1], [1.0], 180e3)


@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=13), st.data())
def test_link_capacity_monotone_and_additive(sinrs, data):
    i = data.draw(st.integers(0, len(sinrs) - 1))
    bumped = list(sinrs)
    bumped[i] += data.draw(st.floats(0, 100))
    rbgs = list(range(len(sinrs)))
    assert link_capacity(rbgs, bumped, 180e3) >= link_capacity(rbgs, sinrs, 180e3)
    k = data.draw(st.integers(0, len(sinrs)))
    whole = link_capacity(rbgs, sinrs, 180e3)
    parts = link_capacity(rbgs[:k], sinrs[:k], 180e3) + link_capacity(rbgs[k:], sinrs[k:], 180e3)
    assert parts == pytest.approx(whole, rel=1e-12)


def test_tx_delay_cases():
    # 2.8e6 * 1.429e-4 = 400.12 bits fit in one TTI
    assert tx_delay(400, 2.8e6, TTI) == pytest.approx(TTI)
    assert tx_delay(400, 0.0, TTI) == math.inf
    assert tx_delay(500, 500 / (TTI * 1e-3), TTI) == pytest.approx(TTI)
    assert tx_delay(801, 400 / (TTI * 1e-3), TTI) == pytest.approx(3 * TTI)


def test_retx_delay_cases():
    h = HarqConfig(rtt_ttis=4, max_retx=1)
    assert retx_delay(1, h, TTI) == 0.0
    assert retx_delay(2, h, TTI) == pytest.approx(0.5716, abs=1e-12)
    with pytest.raises(ValueError):
        retx_delay(3, h, TTI)
    with pytest.raises(ValueError):
        retx_delay(0, h, TTI)


def test_delay_breakdown_sum():
    d = DelayBreakdown(tx=0.1429, retx=0.5716, queue=0.2858, edge=0.1)
    assert d.total == 0.1429 + 0.5716 + 0.2858 + 0.1


def test_channel_gain_composition():
    r = default_scenario().radio
    g = channel_gain_db(0.125, r, shadowing_db=3.0)
    assert g == pytest.approx(-(path_loss(0.125) + 5.0 - 15.0) + 3.0, abs=1e-12)


def test_noise_power():
    r = default_scenario().radio
    assert noise_power_dbm(r) == pytest.approx(-174 + 10 * math.log10(180e3) + 5, abs=1e-9)


def test_ue_drop_inside_cell():
    r = default_scenario().radio
    ues = place_ues(500, r, np.random.default_rng(3))
    d = np.array([u.distance for u in ues])
    assert np.all(d > 0) and np.all(d <= r.cell_radius / 1000)
    # uniform over the disk: P(d <= R/2) = 1/4
    assert abs(np.mean(d <= r.cell_radius / 2000) - 0.25) < 0.06
    s = np.array([u.shadowing_db for u in ues])
    assert abs(s.std() - 8.0) < 1.0
    assert all(ue_sinr(u, r) > 0 for u in ues)
