"""Link-level radio model: path loss, SINR, Shannon capacity, delay components."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PATHLOSS_INTERCEPT_DB, PATHLOSS_SLOPE_DB, HarqConfig, RadioConfig


@dataclass(frozen=True)
class UePosition:
    enb_id: int
    ue_id: int
    distance: float  # km, to the serving eNB
    shadowing_db: float
    x: float = 0.0  # km, serving-cell coordinates
    y: float = 0.0


@dataclass(frozen=True)
class DelayBreakdown:
    tx: float
    retx: float
    queue: float
    edge: float

    @property
    def total(self) -> float:
        return self.tx + self.retx + self.queue + self.edge


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def path_loss(distance: float, intercept: float = PATHLOSS_INTERCEPT_DB,
              slope: float = PATHLOSS_SLOPE_DB) -> float:
    """Path loss in dB for a link of ``distance`` km."""
    if not distance > 0:
        raise ValueError(f"distance must be > 0 km, got {distance!r}")
    return intercept + slope * math.log10(distance)


def channel_gain_db(distance: float, radio: RadioConfig, shadowing_db: float = 0.0) -> float:
    pl = path_loss(distance, radio.pathloss_intercept, radio.pathloss_slope)
    return -(pl + radio.penetration_loss - radio.antenna_gain) + shadowing_db


def noise_power_dbm(radio: RadioConfig) -> float:
    """Thermal noise over one RBG plus receiver noise figure."""
    return radio.noise_density + 10.0 * math.log10(radio.rb_bandwidth) + radio.noise_figure


def sinr(target_gain: float, tx_power_dbm: float, interferers, noise_total_dbm: float) -> float:
    """Linear SINR on one RBG.

    ``target_gain`` and the gains inside ``interferers`` (a sequence of
    ``(power_dbm, gain_linear)`` pairs) are linear channel gains.
    """
    signal = db_to_linear(tx_power_dbm) * target_gain
    denom = db_to_linear(noise_total_dbm)
    for power_dbm, gain in interferers:
        denom += db_to_linear(power_dbm) * gain
    return signal / denom


def link_capacity(rbg_set, per_rbg_sinr, rb_bandwidth: float) -> float:
    """Shannon capacity in bit/s summed over the RBGs allocated to one UE."""
    if len(rbg_set) != len(per_rbg_sinr):
        raise ValueError("rbg_set and per_rbg_sinr must have the same length")
    return sum(rb_bandwidth * math.log2(1.0 + s) for s in per_rbg_sinr)


def tx_delay(packet_bits: float, capacity: float, tti_ms: float) -> float:
    """Transmission delay in ms, quantized to whole TTIs; ``inf`` if capacity is 0."""
    if capacity <= 0:
        return math.inf
    per_tti = capacity * tti_ms * 1e-3
    # a packet of exactly one TTI's worth of bits must not spill over on rounding
    return math.ceil(packet_bits / per_tti - 1e-9) * tti_ms


def retx_delay(attempts: int, harq: HarqConfig, tti_ms: float) -> float:
    if attempts < 1 or attempts > 1 + harq.max_retx:
        raise ValueError(f"attempts must lie in [1, {1 + harq.max_retx}], got {attempts}")
    return (attempts - 1) * harq.rtt_ttis * tti_ms


def enb_sites(radio: RadioConfig) -> list[tuple[float, float]]:
    """eNB coordinates in km: serving cell at the origin, neighbours on a hexagonal
    ring at twice the cell radius."""
    isd = 2.0 * radio.cell_radius / 1000.0
    sites = [(0.0, 0.0)]
    for k in range(radio.num_enb - 1):
        theta = math.pi / 3.0 * k
        sites.append((isd * math.cos(theta), isd * math.sin(theta)))
    return sites


def place_ues(n: int, radio: RadioConfig, rng: np.random.Generator, first_id: int = 0,
              min_distance_km: float = 0.001) -> list[UePosition]:
    """Uniform drop over the serving disk with one log-normal shadowing draw per UE."""
    r_max = radio.cell_radius / 1000.0
    radius = r_max * np.sqrt(rng.uniform(0.0, 1.0, n))
    radius = np.maximum(radius, min_distance_km)
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    shadow = rng.normal(0.0, radio.shadowing_sigma, n) if radio.shadowing_sigma > 0 else np.zeros(n)
    return [
        UePosition(enb_id=0, ue_id=first_id + i, distance=float(radius[i]),
                   shadowing_db=float(shadow[i]),
                   x=float(radius[i] * math.cos(theta[i])), y=float(radius[i] * math.sin(theta[i])))
        for i in range(n)
    ]


def ue_sinr(ue: UePosition, radio: RadioConfig) -> float:
    """Per-RBG SINR of a UE of the learning cell under full-buffer interference from
    every other eNB on every RBG. Flat channel, so the value holds on all RBGs."""
    gain = db_to_linear(channel_gain_db(ue.distance, radio, ue.shadowing_db))
    interferers = []
    for (sx, sy) in enb_sites(radio)[1:]:
        d = max(math.hypot(ue.x - sx, ue.y - sy), 1e-3)
        interferers.append((radio.tx_power_per_rb, db_to_linear(channel_gain_db(d, radio))))
    return sinr(gain, radio.tx_power_per_rb, interferers, noise_power_dbm(radio))
