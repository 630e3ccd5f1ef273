"""Scenario configuration: typed sections, validation, YAML round-trip, seeding.

Every numeric setting of the simulated system lives here as a default. Other
modules receive a :class:`ScenarioConfig` and never carry their own copies.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

FORMAT_VERSION = 1
SEED_ENV_VAR = "SLICEQ_SEED"

# Urban-macro path-loss constants: PL(dB) = intercept + slope * log10(d_km).
PATHLOSS_INTERCEPT_DB = 128.1
PATHLOSS_SLOPE_DB = 37.6

ALGORITHMS = ("q_learning", "double_q", "ensemble_mv", "self_play_ensemble")
ENSEMBLE_ALGORITHMS = ("ensemble_mv", "self_play_ensemble")


class ConfigError(ValueError):
    """Raised when a config document is malformed or violates an invariant."""


@dataclass(frozen=True)
class RadioConfig:
    cell_radius: float = 125.0  # m
    bandwidth: float = 20e6  # Hz, descriptive only
    num_rbg: int = 13
    subcarrier_spacing: float = 15e3  # Hz
    subcarriers_per_rb: int = 12
    tx_power_per_rb: float = 40.0  # dBm
    antenna_gain: float = 15.0  # dB
    carrier_freq: float = 30e9  # Hz
    noise_density: float = -174.0  # dBm/Hz
    noise_figure: float = 5.0  # dB
    penetration_loss: float = 5.0  # dB
    shadowing_sigma: float = 8.0  # dB
    num_enb: int = 3
    tti_ms: float = 0.1429
    pathloss_intercept: float = PATHLOSS_INTERCEPT_DB
    pathloss_slope: float = PATHLOSS_SLOPE_DB

    @property
    def rb_bandwidth(self) -> float:
        """Bandwidth of one allocatable RBG in Hz."""
        return self.subcarriers_per_rb * self.subcarrier_spacing

    def validate(self) -> None:
        _require(self.num_rbg >= 1, "radio.num_rbg must be >= 1")
        _require(self.num_enb >= 1, "radio.num_enb must be >= 1")
        _require(self.subcarriers_per_rb >= 1, "radio.subcarriers_per_rb must be >= 1")
        _require(self.cell_radius > 0, "radio.cell_radius must be > 0")
        _require(self.subcarrier_spacing > 0, "radio.subcarrier_spacing must be > 0")
        _require(self.bandwidth > 0, "radio.bandwidth must be > 0")
        _require(self.carrier_freq > 0, "radio.carrier_freq must be > 0")
        _require(self.tti_ms > 0, "radio.tti_ms must be > 0")
        _require(self.pathloss_slope > 0, "radio.pathloss_slope must be > 0")
        for name in ("tx_power_per_rb", "antenna_gain", "noise_density", "noise_figure",
                     "penetration_loss", "pathloss_intercept"):
            _require(math.isfinite(getattr(self, name)), f"radio.{name} must be finite")
        _require(math.isfinite(self.shadowing_sigma) and self.shadowing_sigma >= 0,
                 "radio.shadowing_sigma must be finite and >= 0")
        # 13 x 180 kHz RBGs cannot tile 20 MHz; the grid only has to fit inside it.
        _require(self.num_rbg * self.rb_bandwidth <= self.bandwidth * 1.1,
                 "radio.bandwidth: RBG grid (num_rbg x subcarriers_per_rb x "
                 "subcarrier_spacing) exceeds the configured bandwidth")


@dataclass(frozen=True)
class TrafficConfig:
    urllc_ues: int = 10
    embb_ues: int = 5
    urllc_pkt_bytes: int = 50
    embb_pkt_bytes: int = 100
    urllc_rate: float = 0.1  # packets / TTI / UE
    embb_rate: float = 0.1

    def validate(self) -> None:
        _require(self.urllc_ues >= 1, "traffic.urllc_ues must be >= 1")
        _require(self.embb_ues >= 1, "traffic.embb_ues must be >= 1")
        _require(self.urllc_pkt_bytes > 0, "traffic.urllc_pkt_bytes must be > 0")
        _require(self.embb_pkt_bytes > 0, "traffic.embb_pkt_bytes must be > 0")
        _require(self.urllc_rate > 0 and math.isfinite(self.urllc_rate),
                 "traffic.urllc_rate must be > 0")
        _require(self.embb_rate > 0 and math.isfinite(self.embb_rate),
                 "traffic.embb_rate must be > 0")


@dataclass(frozen=True)
class HarqConfig:
    rtt_ttis: int = 4
    num_processes: int = 6
    max_retx: int = 1
    initial_bler: float = 0.1

    def validate(self) -> None:
        _require(self.rtt_ttis >= 1, "harq.rtt_ttis must be >= 1")
        _require(self.num_processes >= 1, "harq.num_processes must be >= 1")
        _require(self.max_retx >= 0, "harq.max_retx must be >= 0")
        _require(0.0 <= self.initial_bler <= 1.0, "harq.initial_bler must lie in [0, 1]")


@dataclass(frozen=True)
class MdpConfig:
    queue_cap: int = 10
    d_target: float = 1.0  # ms
    w_embb: float = 1.0  # per Mbps
    w_urllc: float = 1.0  # per ms
    urllc_delay_budget: float = 2.0  # ms
    edge_delay: float = 0.1  # ms
    ttis_per_episode: int = 200
    num_episodes: int = 300

    def validate(self) -> None:
        _require(self.queue_cap >= 1, "mdp.queue_cap must be >= 1")
        _require(self.d_target > 0, "mdp.d_target must be > 0")
        _require(self.w_embb > 0, "mdp.w_embb must be > 0")
        _require(self.w_urllc > 0, "mdp.w_urllc must be > 0")
        _require(self.urllc_delay_budget >= self.d_target,
                 "mdp.urllc_delay_budget must be >= mdp.d_target")
        _require(self.edge_delay >= 0, "mdp.edge_delay must be >= 0")
        _require(self.ttis_per_episode >= 1, "mdp.ttis_per_episode must be >= 1")
        _require(self.num_episodes >= 0, "mdp.num_episodes must be >= 0")


@dataclass(frozen=True)
class AgentConfig:
    algorithm: str = "self_play_ensemble"
    alpha: float = 0.5
    per_table_alpha: tuple[float, ...] = (0.7, 0.8, 0.9)
    beta: float = 0.5
    gamma: float = 0.2
    epsilon: float = 0.3
    num_tables: int = 3
    adversarial_table: int | None = None
    snapshot_every: int = 1

    def validate(self) -> None:
        _require(self.algorithm in ALGORITHMS,
                 f"agent.algorithm must be one of {', '.join(ALGORITHMS)}")
        for name in ("alpha", "beta", "gamma", "epsilon"):
            _require(0.0 <= getattr(self, name) <= 1.0, f"agent.{name} must lie in [0, 1]")
        _require(all(0.0 <= a <= 1.0 for a in self.per_table_alpha),
                 "agent.per_table_alpha entries must lie in [0, 1]")
        _require(self.num_tables >= 1, "agent.num_tables must be >= 1")
        _require(len(self.per_table_alpha) == self.num_tables,
                 "agent.per_table_alpha length must equal agent.num_tables")
        if self.algorithm in ENSEMBLE_ALGORITHMS:
            _require(self.num_tables % 2 == 1,
                     "agent.num_tables must be odd for ensemble algorithms")
        _require(self.snapshot_every >= 1, "agent.snapshot_every must be >= 1")
        if self.adversarial_table is not None:
            _require(self.algorithm != "q_learning",
                     "agent.adversarial_table needs a second table; q_learning has one")
            limit = 2 if self.algorithm == "double_q" else self.num_tables
            _require(0 <= self.adversarial_table < limit,
                     "agent.adversarial_table must index an existing table")
            _require(limit >= 2, "agent.adversarial_table needs at least 2 tables")


@dataclass(frozen=True)
class ScenarioConfig:
    radio: RadioConfig = field(default_factory=RadioConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    harq: HarqConfig = field(default_factory=HarqConfig)
    mdp: MdpConfig = field(default_factory=MdpConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    seed: int = 0

    def validate(self) -> "ScenarioConfig":
        for section in (self.radio, self.traffic, self.harq, self.mdp, self.agent):
            section.validate()
        _require(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        return self

    def replace(self, **sections) -> "ScenarioConfig":
        """Return a validated copy with whole sections or ``seed`` swapped."""
        return dataclasses.replace(self, **sections).validate()

    def with_agent(self, **changes) -> "ScenarioConfig":
        return self.replace(agent=dataclasses.replace(self.agent, **changes))

    def with_mdp(self, **changes) -> "ScenarioConfig":
        return self.replace(mdp=dataclasses.replace(self.mdp, **changes))

    @property
    def tti_seconds(self) -> float:
        return self.radio.tti_ms * 1e-3


_SECTIONS = {
    "radio": RadioConfig,
    "traffic": TrafficConfig,
    "harq": HarqConfig,
    "mdp": MdpConfig,
    "agent": AgentConfig,
}


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def default_scenario() -> ScenarioConfig:
    return ScenarioConfig().validate()


def _coerce(section: str, f: dataclasses.Field, value):
    key = f"{section}.{f.name}"
    kind = f.type
    if f.name == "per_table_alpha":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key} must be a list of numbers")
        return tuple(_coerce_number(key, v, float) for v in value)
    if f.name == "adversarial_table":
        return None if value is None else _coerce_number(key, value, int)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if kind == "int":
        return _coerce_number(key, value, int)
    return _coerce_number(key, value, float)


def _coerce_number(key: str, value, kind):
    if isinstance(value, str):
        # YAML 1.1 reads "2e7" (no dot, no exponent sign) as a string
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def from_dict(doc: dict | None) -> ScenarioConfig:
    """Build a validated config from a parsed document; absent keys take defaults."""
    doc = dict(doc or {})
    version = doc.pop("version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    kwargs = {}
    for key, value in doc.items():
        if key == "seed":
            kwargs["seed"] = _coerce_number("seed", value, int)
            continue
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is None:
            value = {}
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        cls = _SECTIONS[key]
        known = {f.name: f for f in fields(cls)}
        parsed = {}
        for name, raw in value.items():
            if name not in known:
                raise ConfigError(f"unknown config key {key}.{name}")
            parsed[name] = _coerce(key, known[name], raw)
        kwargs[key] = cls(**parsed)
    return ScenarioConfig(**kwargs).validate()


def to_dict(config: ScenarioConfig) -> dict:
    doc = {"version": FORMAT_VERSION, "seed": config.seed}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(config, name))
        if "per_table_alpha" in section:
            section["per_table_alpha"] = list(section["per_table_alpha"])
        doc[name] = section
    return doc


def load_scenario(text: str, env: dict | None = None) -> ScenarioConfig:
    """Parse a YAML config document.

    An empty document yields the default scenario. If ``SLICEQ_SEED`` is set in
    ``env`` (defaults to ``os.environ``) it overrides the document's seed.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping at top level")
    config = from_dict(doc)
    env = os.environ if env is None else env
    if env.get(SEED_ENV_VAR):
        try:
            seed = int(env[SEED_ENV_VAR])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
        config = config.replace(seed=seed)
    return config


def dump_scenario(config: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False)


def scenario_hash(config: ScenarioConfig) -> str:
    """Platform-stable SHA-256 digest of the canonical config document."""
    canonical = yaml.safe_dump(to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def rng_stream(seed: int, stream_id: str) -> np.random.Generator:
    """Independent generator for one subsystem of one run.

    The label is hashed into the seed sequence, so streams with different labels
    (e.g. ``"traffic"``, ``"channel"``, ``"exploration"``) never share draws.
    """
    label = int.from_bytes(hashlib.sha256(stream_id.encode("utf-8")).digest()[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, label])))


class UniformStream:
    """Buffered scalar draws from a generator; cheap enough for per-TTI use."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self._rng = rng
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def integers(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return min(int(self.random() * n), n - 1)

    def choice(self, items):
        return items[self.integers(len(items))]
