import dataclasses
import math
from collections import deque

import numpy as np
import pytest

from sliceq.config import MdpConfig, TrafficConfig, default_scenario, rng_stream
from sliceq.env import (
    EMBB,
    URLLC,
    Delivery,
    EnvState,
    Packet,
    SliceAction,
    SlicingEnv,
    TtiMetrics,
    arrivals,
    objective,
    reset,
    reward,
    schedule_intra_slice,
    step,
)
from sliceq.radio import DelayBreakdown

TTI = 0.1429


def quiet(config=None, **harq):
    """Scenario with (practically) no traffic and optional HARQ overrides."""
    cfg = config or default_scenario()
    cfg = cfg.replace(traffic=dataclasses.replace(cfg.traffic, urllc_rate=1e-12, embb_rate=1e-12))
    if harq:
        cfg = cfg.replace(harq=dataclasses.replace(cfg.harq, **harq))
    return cfg


def bare_state(n_embb=0, n_urllc=1, bits_per_rbg=1e6):
    slices = [EMBB] * n_embb + [URLLC] * n_urllc
    n = len(slices)
    return EnvState(tti=0, episode=0, ue_slice=slices, queues=[deque() for _ in range(n)],
                    harq_in_flight=[[] for _ in range(n)], ue_positions=[],
                    bits_per_rbg=[bits_per_rbg] * n)


def test_reset_empty():
    cfg = default_scenario()
    env = SlicingEnv(cfg)
    obs = env.reset(0)
    assert (obs.q_embb, obs.q_urllc) == (0, 0)
    assert env.state.tti == 0


def test_reset_deterministic():
    cfg = default_scenario()
    a, b = reset(cfg, 3, seed=9), reset(cfg, 3, seed=9)
    assert a.ue_positions == b.ue_positions
    assert a.bits_per_rbg == b.bits_per_rbg


def test_episodes_redraw_positions():
    cfg = default_scenario()
    p0 = [u.distance for u in reset(cfg, 0, seed=9).ue_positions]
    p1 = [u.distance for u in reset(cfg, 1, seed=9).ue_positions]
    assert all(x != y for x, y in zip(p0, p1))


def test_arrivals_degenerate_rate():
    state = bare_state(n_embb=2, n_urllc=3)
    zero = TrafficConfig(urllc_rate=0.0, embb_rate=0.0)
    rng = rng_stream(0, "traffic")
    for _ in range(100):
        arrivals(state, zero, rng)
    assert all(not q for q in state.queues)


def test_arrivals_poisson_total():
    state = bare_state(n_embb=0, n_urllc=10)
    traffic = TrafficConfig(urllc_ues=10, urllc_rate=0.5)
    rng = rng_stream(1, "traffic")
    for t in range(10_000):
        state.tti = t
        arrivals(state, traffic, rng)
    total = sum(len(q) for q in state.queues)
    # Poisson total over 10 UEs x 10,000 TTIs: mean = var = 50,000
    assert abs(total - 50_000) <= 3 * math.sqrt(50_000)
    assert state.arrived[URLLC] == total


def test_arrivals_leave_harq_alone():
    state = bare_state(n_urllc=2)
    parked = Packet(URLLC, 0, 400, 0)
    state.harq_in_flight[0].append((parked, 4))
    arrivals(state, TrafficConfig(urllc_rate=3.0), rng_stream(0, "traffic"))
    assert state.harq_in_flight[0] == [(parked, 4)]
    assert parked.attempts == 0


def _backlog(state, ues, arrival=0):
    for u in ues:
        state.queues[u].append(Packet(state.ue_slice[u], u, 400, arrival))


def test_schedule_single_claimant():
    state = bare_state(n_urllc=10)
    _backlog(state, [3])
    alloc = schedule_intra_slice(state, SliceAction(0, 13))
    assert len(alloc) == 13 and all(v == (URLLC, 3) for v in alloc.values())


def test_schedule_exact_division():
    state = bare_state(n_urllc=10)
    _backlog(state, [1, 4, 6, 8])
    alloc = schedule_intra_slice(state, SliceAction(9, 4))
    assert sorted(u for _, u in alloc.values()) == [1, 4, 6, 8]
    assert set(alloc) == {9, 10, 11, 12}


def test_schedule_uneven_split_rotation():
    state = bare_state(n_urllc=10)
    _backlog(state, [2, 7])
    alloc = schedule_intra_slice(state, SliceAction(8, 5))
    counts = {u: sum(1 for _, v in alloc.values() if v == u) for u in (2, 7)}
    assert counts == {2: 3, 7: 2}
    # rotating the round-robin pointer past UE 2 hands the extra RBG to UE 7
    state.rr_offset[URLLC] = 3
    alloc = schedule_intra_slice(state, SliceAction(8, 5))
    counts = {u: sum(1 for _, v in alloc.values() if v == u) for u in (2, 7)}
    assert counts == {2: 2, 7: 3}


def test_schedule_oldest_head_first():
    state = bare_state(n_urllc=3)
    state.queues[0].append(Packet(URLLC, 0, 400, 5))
    state.queues[2].append(Packet(URLLC, 2, 400, 1))
    alloc = schedule_intra_slice(state, SliceAction(10, 3))
    assert [alloc[r][1] for r in (10, 11, 12)] == [2, 0, 2]


def test_schedule_idle_slice_leaves_rbgs_free():
    state = bare_state(n_embb=2, n_urllc=2)
    _backlog(state, [0])
    alloc = schedule_intra_slice(state, SliceAction(6, 7))
    assert set(alloc) == set(range(6))


def test_empty_system_reward():
    cfg = quiet()
    env = SlicingEnv(cfg)
    env.reset(0)
    for a in range(14):
        _, m = env.step(a)
        assert m.reward == 0.0
        assert not m.delivered


def test_single_urllc_packet_delay():
    cfg = quiet(initial_bler=0.0)
    env = SlicingEnv(cfg)
    env.reset(0)
    u = env.state.slice_ues(URLLC)[0]
    env.state.bits_per_rbg[u] = 1e4
    env.state.queues[u].append(Packet(URLLC, u, 400, 0, (0.5, 0.5)))
    _, m = env.step(SliceAction(0, 13))
    [d] = m.delivered
    assert d.delay == DelayBreakdown(tx=TTI, retx=0.0, queue=0.0, edge=cfg.mdp.edge_delay)
    assert d.delay.total == pytest.approx(TTI + cfg.mdp.edge_delay, abs=1e-12)


def test_multi_tti_transmission_counts_wall_clock():
    cfg = quiet(initial_bler=0.0)
    env = SlicingEnv(cfg)
    env.reset(0)
    u = env.state.slice_ues(URLLC)[0]
    env.state.bits_per_rbg[u] = 10.5  # 136.5 bits per TTI with 13 RBGs, three TTIs of service
    env.state.queues[u].append(Packet(URLLC, u, 400, 0, (0.5, 0.5)))
    env.step(SliceAction(0, 13))
    env.step(SliceAction(13, 0))  # starved for one TTI
    _, m = env.step(SliceAction(0, 13))
    assert not m.delivered
    _, m = env.step(SliceAction(0, 13))
    [d] = m.delivered
    assert d.delay.tx == pytest.approx(4 * TTI)
    assert d.delay.queue == 0.0


def test_harq_retransmission_delay():
    cfg = quiet(initial_bler=0.5)
    env = SlicingEnv(cfg)
    env.reset(0)
    u = env.state.slice_ues(URLLC)[0]
    env.state.bits_per_rbg[u] = 1e4
    # first attempt fails (0.1 < 0.5), retransmission succeeds
    env.state.queues[u].append(Packet(URLLC, u, 400, 0, (0.1, 0.9)))
    delivered = []
    for _ in range(6):
        _, m = env.step(SliceAction(0, 13))
        delivered += m.delivered
    [d] = delivered
    assert d.attempts == 2
    assert d.delay.retx == pytest.approx(4 * TTI)
    assert d.delay.total == pytest.approx(TTI + 4 * TTI + cfg.mdp.edge_delay)


def test_forced_double_failure_drops():
    cfg = quiet(initial_bler=1.0, max_retx=1)
    env = SlicingEnv(cfg)
    env.reset(0)
    u = env.state.slice_ues(URLLC)[0]
    env.state.bits_per_rbg[u] = 1e4
    env.state.queues[u].append(Packet(URLLC, u, 400, 0, (0.3, 0.3)))
    env.state.arrived[URLLC] += 1
    dropped = 0
    for _ in range(8):
        _, m = env.step(SliceAction(0, 13))
        assert not m.delivered
        dropped += m.dropped[URLLC]
    assert dropped == 1
    assert env.state.dropped[URLLC] == 1


def test_urllc_budget_drop():
    cfg = quiet()
    env = SlicingEnv(cfg)
    env.reset(0)
    u = env.state.slice_ues(URLLC)[0]
    env.state.queues[u].append(Packet(URLLC, u, 400, 0, (0.9, 0.9)))
    budget_ttis = math.floor(cfg.mdp.urllc_delay_budget / TTI)
    drops = []
    for _ in range(budget_ttis + 2):
        _, m = env.step(SliceAction(13, 0))
        drops.append(m.dropped[URLLC])
    # survives while (t + 1) * TTI <= budget, so the first drop is at t = budget_ttis
    assert drops.index(1) == budget_ttis
    assert sum(drops) == 1


def test_embb_never_age_dropped():
    cfg = quiet()
    env = SlicingEnv(cfg)
    env.reset(0)
    u = env.state.slice_ues(EMBB)[0]
    env.state.queues[u].append(Packet(EMBB, u, 800, 0, (0.9, 0.9)))
    for _ in range(100):
        _, m = env.step(SliceAction(0, 13))
        assert m.dropped[EMBB] == 0
    assert len(env.state.queues[u]) == 1


def test_reward_hand_value():
    mdp = MdpConfig(d_target=1.0, w_embb=1.0, w_urllc=1.0)
    assert objective(5.0, [0.4], mdp) == pytest.approx(5.6, rel=1e-12)
    assert objective(5.0, [0.2, 0.6], mdp) == pytest.approx(5.6, rel=1e-12)


def test_reward_empty():
    mdp = MdpConfig(d_target=1.0)
    assert objective(0.0, [], mdp) == 0.0


def test_reward_linear_in_embb_weight():
    base = MdpConfig(d_target=1.0, w_embb=1.0, w_urllc=1.0)
    double = dataclasses.replace(base, w_embb=2.0)
    r1, r2 = objective(3.0, [0.3], base), objective(3.0, [0.3], double)
    assert r2 - r1 == pytest.approx(3.0, rel=1e-12)


def test_reward_from_metrics():
    mdp = MdpConfig(d_target=1.0, urllc_delay_budget=2.0)
    m = TtiMetrics(delivered=[Delivery(URLLC, 5, DelayBreakdown(TTI, 0.0, 0.0, 0.1), 400, 1)],
                   embb_served_bits=1000.0)
    m.dropped[URLLC] = 1
    thr = 1000.0 / (TTI * 1e-3) / 1e6 / 5
    expected = thr + (1.0 - (TTI + 0.1 + 2.0) / 2)
    assert reward(m, mdp, 5, TTI) == pytest.approx(expected, rel=1e-12)


def test_observation_clamp():
    cfg = default_scenario().with_mdp(queue_cap=2)
    env = SlicingEnv(cfg)
    env.reset(0)
    for u in env.state.slice_ues(URLLC)[:3]:
        env.state.queues[u].append(Packet(URLLC, u, 400, 0))
    obs = env.state.observation(2)
    assert obs.q_urllc == 2


def test_step_rejects_bad_action():
    cfg = default_scenario()
    env = SlicingEnv(cfg)
    env.reset(0)
    with pytest.raises(ValueError):
        step(env.state, SliceAction(5, 5), cfg, rng_stream(0, "traffic"))
    with pytest.raises(ValueError):
        env.step(14)
