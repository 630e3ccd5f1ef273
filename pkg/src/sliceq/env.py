"""TTI-stepped two-slice downlink environment for the learning eNB.

Each TTI the inter-slice action splits the RBGs between eMBB and URLLC; inside a
slice the RBGs go round-robin to backlogged UEs, oldest head-of-line first.
Packets move queue -> (HARQ in flight) -> delivered | dropped.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig, TrafficConfig, UniformStream, rng_stream
from .radio import DelayBreakdown, UePosition, place_ues, retx_delay, ue_sinr

EMBB = "embb"
URLLC = "urllc"
SLICES = (EMBB, URLLC)


class Packet:
    __slots__ = ("slice", "ue_id", "size_bits", "arrival_tti", "attempts",
                 "remaining_bits", "service_start", "tx_ttis", "fail_draws")

    def __init__(self, slice_, ue_id, size_bits, arrival_tti, fail_draws=()):
        self.slice = slice_
        self.ue_id = ue_id
        self.size_bits = size_bits
        self.arrival_tti = arrival_tti
        self.attempts = 0
        self.remaining_bits = float(size_bits)
        self.service_start = None
        self.tx_ttis = 0
        self.fail_draws = fail_draws

    def __repr__(self):
        return (f"Packet({self.slice}, ue={self.ue_id}, arrival={self.arrival_tti}, "
                f"attempts={self.attempts})")


@dataclass(frozen=True)
class Observation:
    q_embb: int
    q_urllc: int

    def index(self, queue_cap: int) -> int:
        return self.q_embb * (queue_cap + 1) + self.q_urllc


@dataclass(frozen=True)
class SliceAction:
    r_embb: int
    r_urllc: int

    @classmethod
    def from_index(cls, index: int, num_rbg: int) -> "SliceAction":
        if not 0 <= index <= num_rbg:
            raise ValueError(f"action index {index} outside [0, {num_rbg}]")
        return cls(index, num_rbg - index)

    def index(self) -> int:
        return self.r_embb


@dataclass
class Delivery:
    slice: str
    ue_id: int
    delay: DelayBreakdown
    bits: int
    attempts: int


@dataclass
class TtiMetrics:
    delivered: list[Delivery] = field(default_factory=list)
    dropped: dict = field(default_factory=lambda: {EMBB: 0, URLLC: 0})
    embb_served_bits: float = 0.0
    reward: float = 0.0
    allocation: dict = field(default_factory=dict)


@dataclass
class EpisodeMetrics:
    mean_reward: float
    mean_urllc_delay: float  # ms, nan when no URLLC packet was delivered
    mean_embb_throughput: float  # Mbps per eMBB UE
    pdr_urllc: float


@dataclass
class EnvState:
    tti: int
    episode: int
    ue_slice: list[str]
    queues: list[deque]
    harq_in_flight: list[list]
    ue_positions: list[UePosition]
    bits_per_rbg: list[float]  # per UE, bits one RBG carries in one TTI
    rr_offset: dict = field(default_factory=lambda: {EMBB: 0, URLLC: 0})
    arrived: dict = field(default_factory=lambda: {EMBB: 0, URLLC: 0})
    delivered: dict = field(default_factory=lambda: {EMBB: 0, URLLC: 0})
    dropped: dict = field(default_factory=lambda: {EMBB: 0, URLLC: 0})
    harq_stream: UniformStream | None = None

    def slice_ues(self, slice_: str) -> list[int]:
        return [u for u, s in enumerate(self.ue_slice) if s == slice_]

    def resident(self, slice_: str) -> int:
        n = 0
        for u, s in enumerate(self.ue_slice):
            if s == slice_:
                n += len(self.queues[u]) + len(self.harq_in_flight[u])
        return n

    def observation(self, queue_cap: int) -> Observation:
        q = {EMBB: 0, URLLC: 0}
        for u, s in enumerate(self.ue_slice):
            q[s] += len(self.queues[u])
        return Observation(min(q[EMBB], queue_cap), min(q[URLLC], queue_cap))


def reset(config: ScenarioConfig, episode: int, seed: int | None = None) -> EnvState:
    """Fresh episode: empty queues and a new UE drop drawn from the channel stream."""
    seed = config.seed if seed is None else seed
    tr = config.traffic
    channel = rng_stream(seed, f"channel/{episode}")
    positions = place_ues(tr.embb_ues + tr.urllc_ues, config.radio, channel)
    tti_s = config.tti_seconds
    b_rb = config.radio.rb_bandwidth
    bits = [b_rb * math.log2(1.0 + ue_sinr(p, config.radio)) * tti_s for p in positions]
    n = len(positions)
    return EnvState(
        tti=0,
        episode=episode,
        ue_slice=[EMBB] * tr.embb_ues + [URLLC] * tr.urllc_ues,
        queues=[deque() for _ in range(n)],
        harq_in_flight=[[] for _ in range(n)],
        ue_positions=positions,
        bits_per_rbg=bits,
        harq_stream=UniformStream(rng_stream(seed, f"harq/{episode}")),
    )


def arrivals(state: EnvState, traffic: TrafficConfig, rng: np.random.Generator,
             max_attempts: int = 1) -> EnvState:
    """Poisson arrivals for every UE, stamped with the current TTI."""
    rates = [traffic.embb_rate if s == EMBB else traffic.urllc_rate for s in state.ue_slice]
    counts = rng.poisson(rates)
    harq = state.harq_stream
    for u, k in enumerate(counts.tolist()):
        if not k:
            continue
        s = state.ue_slice[u]
        size = 8 * (traffic.embb_pkt_bytes if s == EMBB else traffic.urllc_pkt_bytes)
        q = state.queues[u]
        for _ in range(k):
            draws = tuple(harq.random() for _ in range(max_attempts)) if harq else ()
            q.append(Packet(s, u, size, state.tti, draws))
        state.arrived[s] += k
    return state


def _eligible(state: EnvState, u: int, num_processes: int) -> bool:
    return bool(state.queues[u]) and len(state.harq_in_flight[u]) < num_processes


def schedule_intra_slice(state: EnvState, action: SliceAction,
                         num_processes: int | None = None) -> dict[int, tuple[str, int]]:
    """Map RBG index -> (slice, ue_id).

    eMBB owns RBGs ``[0, r_embb)`` and URLLC the rest. Within a slice the
    backlogged UEs are ordered by head-of-line arrival (oldest first), ties by
    round-robin position, and RBGs are dealt to them in turn. RBGs of a slice with
    no backlog stay unassigned.
    """
    allocation = {}
    first = {EMBB: 0, URLLC: action.r_embb}
    count = {EMBB: action.r_embb, URLLC: action.r_urllc}
    for s in SLICES:
        if count[s] == 0:
            continue
        ues = state.slice_ues(s)
        n = len(ues)
        offset = state.rr_offset[s]
        backlogged = [u for u in ues
                      if (_eligible(state, u, num_processes) if num_processes
                          else bool(state.queues[u]))]
        if not backlogged:
            continue
        backlogged.sort(key=lambda u: (state.queues[u][0].arrival_tti,
                                       (ues.index(u) - offset) % n))
        for k in range(count[s]):
            allocation[first[s] + k] = (s, backlogged[k % len(backlogged)])
    return allocation


def objective(embb_throughput_mbps: float, urllc_latencies, mdp) -> float:
    """Weighted slice objective for one TTI.

    ``embb_throughput_mbps`` is the mean per-UE eMBB rate and ``urllc_latencies``
    the latencies (ms) of URLLC packets that left the system. An empty latency
    list contributes 0 to the URLLC term.
    """
    lat = list(urllc_latencies)
    margin = mdp.d_target - sum(lat) / len(lat) if lat else 0.0
    return mdp.w_embb * embb_throughput_mbps + mdp.w_urllc * margin


def reward(metrics: "TtiMetrics", mdp, num_embb_ues: int, tti_ms: float) -> float:
    """Reward of one TTI from its metrics.

    eMBB throughput is the bits carried on eMBB RBGs this TTI, averaged over all
    provisioned eMBB UEs. A dropped URLLC packet counts at the drop budget.
    """
    throughput = metrics.embb_served_bits / (tti_ms * 1e-3) / 1e6 / num_embb_ues
    lat = [d.delay.total for d in metrics.delivered if d.slice == URLLC]
    lat += [mdp.urllc_delay_budget] * metrics.dropped[URLLC]
    return objective(throughput, lat, mdp)


class _Accounting:
    def __init__(self, state, config, metrics):
        self.state = state
        self.metrics = metrics
        self.tti_ms = config.radio.tti_ms
        self.harq = config.harq
        self.edge = config.mdp.edge_delay

    def deliver(self, p: Packet) -> None:
        tti_ms = self.tti_ms
        delay = DelayBreakdown(
            tx=p.tx_ttis * tti_ms,
            retx=retx_delay(p.attempts, self.harq, tti_ms),
            queue=(p.service_start - p.arrival_tti) * tti_ms,
            edge=self.edge,
        )
        self.metrics.delivered.append(Delivery(p.slice, p.ue_id, delay, p.size_bits, p.attempts))
        self.state.delivered[p.slice] += 1

    def drop(self, p: Packet) -> None:
        self.metrics.dropped[p.slice] += 1
        self.state.dropped[p.slice] += 1

    def attempt(self, p: Packet, release_tti: int) -> None:
        """One transmission attempt: deliver, park in HARQ, or drop when exhausted."""
        p.attempts += 1
        u = p.fail_draws[p.attempts - 1] if p.attempts <= len(p.fail_draws) else 1.0
        if u >= self.harq.initial_bler:
            self.deliver(p)
        elif p.attempts >= 1 + self.harq.max_retx:
            self.drop(p)
        else:
            self.state.harq_in_flight[p.ue_id].append((p, release_tti))


def step(state: EnvState, action: SliceAction, config: ScenarioConfig,
         traffic_rng: np.random.Generator) -> tuple[EnvState, Observation, TtiMetrics]:
    """Advance one TTI under ``action``; returns the next observation and TTI metrics."""
    radio, harq, mdp, traffic = config.radio, config.harq, config.mdp, config.traffic
    if action.r_embb < 0 or action.r_urllc < 0 or action.r_embb + action.r_urllc != radio.num_rbg:
        raise ValueError(f"invalid slice action {action}")
    t = state.tti
    metrics = TtiMetrics()
    acct = _Accounting(state, config, metrics)

    # 1. HARQ feedback due this TTI
    for u, flights in enumerate(state.harq_in_flight):
        if not flights:
            continue
        due = [f for f in flights if f[1] <= t]
        if not due:
            continue
        state.harq_in_flight[u] = [f for f in flights if f[1] > t]
        for p, _ in due:
            acct.attempt(p, t + harq.rtt_ttis)

    # 2. arrivals
    arrivals(state, traffic, traffic_rng, max_attempts=1 + harq.max_retx)

    # 3. intra-slice scheduling
    allocation = schedule_intra_slice(state, action, harq.num_processes)
    metrics.allocation = allocation
    rbgs_per_ue = {}
    for _, (_, u) in allocation.items():
        rbgs_per_ue[u] = rbgs_per_ue.get(u, 0) + 1

    # 4. service up to this TTI's capacity
    for u, n_rbg in rbgs_per_ue.items():
        budget = n_rbg * state.bits_per_rbg[u]
        start_budget = budget
        q = state.queues[u]
        while q and budget > 0 and len(state.harq_in_flight[u]) < harq.num_processes:
            p = q[0]
            if p.service_start is None:
                p.service_start = t
            if p.remaining_bits <= budget:
                budget -= p.remaining_bits
                p.remaining_bits = 0.0
                # wall-clock TTIs from first to last bit, gaps included
                p.tx_ttis = t - p.service_start + 1
                q.popleft()
                acct.attempt(p, t + harq.rtt_ttis)
            else:
                p.remaining_bits -= budget
                budget = 0.0
        if state.ue_slice[u] == EMBB:
            metrics.embb_served_bits += start_budget - budget
    for s in SLICES:
        state.rr_offset[s] += 1

    # 5. URLLC delay-budget drops (packets not yet in service)
    horizon = mdp.urllc_delay_budget
    for u, s in enumerate(state.ue_slice):
        if s != URLLC:
            continue
        q = state.queues[u]
        start = 1 if q and q[0].service_start is not None else 0
        while len(q) > start and (t + 1 - q[start].arrival_tti) * radio.tti_ms > horizon:
            p = q[start]
            del q[start]
            acct.drop(p)

    # 6. reward, 7. clock
    metrics.reward = reward(metrics, mdp, traffic.embb_ues, radio.tti_ms)
    state.tti = t + 1
    return state, state.observation(mdp.queue_cap), metrics


class EpisodeAccumulator:
    """Running per-episode totals turned into :class:`EpisodeMetrics`."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.reward_sum = 0.0
        self.ttis = 0
        self.urllc_delay_sum = 0.0
        self.urllc_delivered = 0
        self.urllc_dropped = 0
        self.embb_bits = 0

    def add(self, metrics: TtiMetrics) -> None:
        self.reward_sum += metrics.reward
        self.ttis += 1
        for d in metrics.delivered:
            if d.slice == URLLC:
                self.urllc_delay_sum += d.delay.total
                self.urllc_delivered += 1
            else:
                self.embb_bits += d.bits
        self.urllc_dropped += metrics.dropped[URLLC]

    def result(self) -> EpisodeMetrics:
        cfg = self.config
        duration_s = self.ttis * cfg.tti_seconds
        n_urllc = self.urllc_delivered + self.urllc_dropped
        return EpisodeMetrics(
            mean_reward=self.reward_sum / self.ttis if self.ttis else 0.0,
            mean_urllc_delay=(self.urllc_delay_sum / self.urllc_delivered
                              if self.urllc_delivered else math.nan),
            mean_embb_throughput=(self.embb_bits / duration_s / 1e6 / cfg.traffic.embb_ues
                                  if duration_s else 0.0),
            pdr_urllc=self.urllc_dropped / n_urllc if n_urllc else 0.0,
        )


class SlicingEnv:
    """Stateful wrapper: one environment per run, reset once per episode."""

    def __init__(self, config: ScenarioConfig, seed: int | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.state: EnvState | None = None
        self._traffic: np.random.Generator | None = None

    @property
    def num_states(self) -> int:
        return (self.config.mdp.queue_cap + 1) ** 2

    @property
    def num_actions(self) -> int:
        return self.config.radio.num_rbg + 1

    def reset(self, episode: int) -> Observation:
        self.state = reset(self.config, episode, self.seed)
        self._traffic = rng_stream(self.seed, f"traffic/{episode}")
        return self.state.observation(self.config.mdp.queue_cap)

    def step(self, action: SliceAction | int) -> tuple[Observation, TtiMetrics]:
        if isinstance(action, int):
            action = SliceAction.from_index(action, self.config.radio.num_rbg)
        _, obs, metrics = step(self.state, action, self.config, self._traffic)
        return obs, metrics
