"""Tabular agents: Q-learning, double Q-learning, majority-vote ensembles and the
self-play ensemble, plus the pessimistic table-corruption attack.

States and actions are plain integer indices; the environment's
``Observation.index`` and ``SliceAction.index`` produce them.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .config import AgentConfig, UniformStream, rng_stream


class QTable:
    """Dense ``num_states x num_actions`` value table, zero-initialised."""

    def __init__(self, num_states: int, num_actions: int, values: np.ndarray | None = None):
        if values is None:
            values = np.zeros((num_states, num_actions), dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.shape != (num_states, num_actions):
            raise ValueError(f"values shape {self.values.shape} != {(num_states, num_actions)}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def copy(self) -> "QTable":
        return QTable(*self.shape, values=self.values.copy())

    def __eq__(self, other):
        return isinstance(other, QTable) and np.array_equal(self.values, other.values)

    def dumps(self) -> str:
        """Flat text: a ``# shape S A`` header, then ``state action value`` per line."""
        out = io.StringIO()
        s_n, a_n = self.shape
        out.write(f"# shape {s_n} {a_n}\n")
        for s in range(s_n):
            for a in range(a_n):
                out.write(f"{s} {a} {float(self.values[s, a])!r}\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "QTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# shape"):
            raise ValueError("missing '# shape S A' header")
        _, _, s_n, a_n = lines[0].split()
        table = cls(int(s_n), int(a_n))
        for ln in lines[1:]:
            s, a, v = ln.split()
            table.values[int(s), int(a)] = float(v)
        return table


@dataclass
class ActionChoice:
    action_index: int
    explored: bool = False
    votes: tuple[int, ...] | None = None


def _argmax_ties(row) -> list[int]:
    best = max(row)
    return [i for i, v in enumerate(row) if v == best]


def greedy_action(table: QTable, obs: int, rng: UniformStream) -> int:
    """Argmax of the row; ties split uniformly using ``rng`` (drawn only on ties)."""
    ties = _argmax_ties(table.values[obs].tolist())
    return ties[0] if len(ties) == 1 else rng.choice(ties)


def epsilon_greedy(table: QTable, obs: int, epsilon: float, explore: UniformStream,
                   tiebreak: UniformStream) -> ActionChoice:
    n_actions = table.shape[1]
    if explore.random() < epsilon:
        return ActionChoice(explore.integers(n_actions), explored=True)
    return ActionChoice(greedy_action(table, obs, tiebreak))


def q_update(table: QTable, s: int, a: int, r: float, s_next: int,
             alpha: float, gamma: float) -> QTable:
    q = table.values
    target = r + gamma * q[s_next].max()
    q[s, a] = q[s, a] + alpha * (target - q[s, a])
    return table


def majority_vote(tables, obs: int, rng: UniformStream) -> ActionChoice:
    """Each table votes its greedy action; the most-voted action wins, vote ties
    are split uniformly."""
    if not tables:
        raise ValueError("majority_vote needs at least one table")
    votes = tuple(greedy_action(t, obs, rng) for t in tables)
    counts: dict[int, int] = {}
    for v in votes:
        counts[v] = counts.get(v, 0) + 1
    top = max(counts.values())
    winners = sorted(a for a, c in counts.items() if c == top)
    choice = winners[0] if len(winners) == 1 else rng.choice(winners)
    return ActionChoice(choice, votes=votes)


def adversarial_update(tables, i: int, s: int, a: int, r: float, s_next: int,
                       alpha: float, gamma: float, partner: int | None = None):
    """Corrupted update of table ``i``: bootstraps from the lowest next-state value
    across itself and a partner table (next index cyclically by default)."""
    if len(tables) < 2:
        raise ValueError("adversarial_update needs at least two tables")
    if not 0 <= i < len(tables):
        raise ValueError(f"table index {i} out of range")
    j = (i + 1) % len(tables) if partner is None else partner
    if j == i:
        raise ValueError("partner table must differ from the corrupted table")
    q = tables[i].values
    worst = min(q[s_next].min(), tables[j].values[s_next].min())
    q[s, a] = q[s, a] + alpha * (r + gamma * worst - q[s, a])
    return tables


@dataclass
class EnsembleState:
    tables: list[QTable]
    snapshots: list[QTable] | None
    per_table_alpha: tuple[float, ...]
    beta: float
    adversarial_index: int | None = None


def self_play_blend(state: EnsembleState) -> EnsembleState:
    """Pull every table entrywise toward its snapshot by weight ``beta``."""
    if state.snapshots is None:
        raise ValueError("self_play_blend needs populated snapshots")
    b = state.beta
    for table, past in zip(state.tables, state.snapshots):
        table.values[...] = (1.0 - b) * table.values + b * past.values
    return state


def snapshot(state: EnsembleState) -> EnsembleState:
    state.snapshots = [t.copy() for t in state.tables]
    return state


@dataclass
class DoubleQState:
    table_a: QTable
    table_b: QTable
    coin: UniformStream


def double_q_update(state: DoubleQState, s: int, a: int, r: float, s_next: int,
                    alpha: float, gamma: float, tiebreak: UniformStream,
                    corrupt_a: bool = False) -> str:
    """Update one of the two tables chosen by a fair coin; returns ``"A"`` or ``"B"``.

    The updated table picks the next action, the other one values it. With
    ``corrupt_a`` table A takes the pessimistic corrupted update instead.
    """
    if state.coin.random() < 0.5:
        if corrupt_a:
            adversarial_update([state.table_a, state.table_b], 0, s, a, r, s_next, alpha, gamma)
        else:
            _decoupled(state.table_a, state.table_b, s, a, r, s_next, alpha, gamma, tiebreak)
        return "A"
    _decoupled(state.table_b, state.table_a, s, a, r, s_next, alpha, gamma, tiebreak)
    return "B"


def _decoupled(learner: QTable, evaluator: QTable, s, a, r, s_next, alpha, gamma, tiebreak):
    a_star = greedy_action(learner, s_next, tiebreak)
    q = learner.values
    q[s, a] = q[s, a] + alpha * (r + gamma * evaluator.values[s_next, a_star] - q[s, a])


class Agent:
    """Common surface: ``act`` picks an action, ``observe`` learns from a
    transition, ``end_episode`` runs per-episode bookkeeping."""

    def __init__(self, config: AgentConfig, num_states: int, num_actions: int, seed: int):
        self.config = config
        self.num_states = num_states
        self.num_actions = num_actions
        self.explore = UniformStream(rng_stream(seed, "exploration"))
        self.tiebreak = UniformStream(rng_stream(seed, "tiebreak"))

    def act(self, obs: int) -> ActionChoice:
        raise NotImplementedError

    def observe(self, s: int, a: int, r: float, s_next: int) -> None:
        raise NotImplementedError

    def end_episode(self, episode: int) -> None:
        pass

    def tables(self) -> list[QTable]:
        raise NotImplementedError


class QLearningAgent(Agent):
    def __init__(self, config, num_states, num_actions, seed):
        super().__init__(config, num_states, num_actions, seed)
        self.table = QTable(num_states, num_actions)

    def act(self, obs):
        return epsilon_greedy(self.table, obs, self.config.epsilon, self.explore, self.tiebreak)

    def observe(self, s, a, r, s_next):
        q_update(self.table, s, a, r, s_next, self.config.alpha, self.config.gamma)

    def tables(self):
        return [self.table]


class DoubleQAgent(Agent):
    def __init__(self, config, num_states, num_actions, seed):
        super().__init__(config, num_states, num_actions, seed)
        self.state = DoubleQState(QTable(num_states, num_actions), QTable(num_states, num_actions),
                                  UniformStream(rng_stream(seed, "coin")))
        self.corrupt_a = config.adversarial_table == 0
        self.corrupt_b = config.adversarial_table == 1

    def act(self, obs):
        if self.explore.random() < self.config.epsilon:
            return ActionChoice(self.explore.integers(self.num_actions), explored=True)
        mean = QTable(1, self.num_actions,
                      values=((self.state.table_a.values[obs] + self.state.table_b.values[obs])
                              / 2.0)[None, :])
        return ActionChoice(greedy_action(mean, 0, self.tiebreak))

    def observe(self, s, a, r, s_next):
        st, cfg = self.state, self.config
        if self.corrupt_b:
            # mirror: swap roles so the corrupted table sits in slot A
            mirrored = DoubleQState(st.table_b, st.table_a, st.coin)
            double_q_update(mirrored, s, a, r, s_next, cfg.alpha, cfg.gamma, self.tiebreak,
                            corrupt_a=True)
        else:
            double_q_update(st, s, a, r, s_next, cfg.alpha, cfg.gamma, self.tiebreak,
                            corrupt_a=self.corrupt_a)

    def tables(self):
        return [self.state.table_a, self.state.table_b]


class EnsembleAgent(Agent):
    """Majority-vote ensemble; with ``self_play`` the tables are blended toward
    their snapshots at every episode end."""

    def __init__(self, config, num_states, num_actions, seed, self_play: bool = False):
        super().__init__(config, num_states, num_actions, seed)
        self.self_play = self_play
        self.state = EnsembleState(
            tables=[QTable(num_states, num_actions) for _ in range(config.num_tables)],
            snapshots=None,
            per_table_alpha=tuple(config.per_table_alpha),
            beta=config.beta,
            adversarial_index=config.adversarial_table,
        )

    def act(self, obs):
        if self.explore.random() < self.config.epsilon:
            return ActionChoice(self.explore.integers(self.num_actions), explored=True)
        return majority_vote(self.state.tables, obs, self.tiebreak)

    def observe(self, s, a, r, s_next):
        st, gamma = self.state, self.config.gamma
        for i, table in enumerate(st.tables):
            if i == st.adversarial_index:
                adversarial_update(st.tables, i, s, a, r, s_next, st.per_table_alpha[i], gamma)
            else:
                q_update(table, s, a, r, s_next, st.per_table_alpha[i], gamma)

    def end_episode(self, episode):
        if not self.self_play:
            return
        if self.state.snapshots is not None:
            self_play_blend(self.state)
        if (episode + 1) % self.config.snapshot_every == 0:
            snapshot(self.state)

    def tables(self):
        return self.state.tables


def make_agent(config: AgentConfig, num_states: int, num_actions: int, seed: int) -> Agent:
    algo = config.algorithm
    if algo == "q_learning":
        return QLearningAgent(config, num_states, num_actions, seed)
    if algo == "double_q":
        return DoubleQAgent(config, num_states, num_actions, seed)
    if algo == "ensemble_mv":
        return EnsembleAgent(config, num_states, num_actions, seed, self_play=False)
    if algo == "self_play_ensemble":
        return EnsembleAgent(config, num_states, num_actions, seed, self_play=True)
    raise ValueError(f"unknown algorithm {algo!r}")
