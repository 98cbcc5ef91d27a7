"""Gateway-as-boundary-clock model and onward distribution inside the factory.

Node errors are signed, in ns: gateway (reference) clock minus node clock,
which equals the accumulated offset-estimation residual along the path.
A node that lags the gateway therefore shows a positive error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import SPEED_OF_LIGHT

IN_BAND = "in_band"
OUT_OF_BAND = "out_of_band"
COMPENSATION_MODES = ("perfect", "none", "estimate")


@dataclass(frozen=True)
class SimClock:
    offset_ns: float = 0.0
    drift_ppb: float = 0.0
    timestamp_granularity_ns: float = 0.0
    timestamp_jitter_sigma_ns: float = 0.0
    epoch_ns: float = 0.0

    def __post_init__(self):
        if self.timestamp_granularity_ns < 0 or self.timestamp_jitter_sigma_ns < 0:
            raise ValueError("granularity and jitter must be >= 0")

    def error_at(self, ideal_time_ns: float) -> float:
        """Deterministic clock error (offset + drift) at an ideal instant."""
        return self.offset_ns + self.drift_ppb * 1e-9 * (ideal_time_ns - self.epoch_ns)


@dataclass(frozen=True)
class PtpLink:
    delay_ms_to_slave_ns: float = 1000.0
    delay_slave_to_ms_ns: float = 1000.0

    def __post_init__(self):
        if self.delay_ms_to_slave_ns < 0 or self.delay_slave_to_ms_ns < 0:
            raise ValueError("link delays must be >= 0")

    @classmethod
    def asymmetric(cls, delay_ns: float, asymmetry_ns: float) -> "PtpLink":
        return cls(delay_ns + asymmetry_ns, delay_ns)


@dataclass(frozen=True)
class FactoryNode:
    id: str
    position: tuple[float, float]


@dataclass(frozen=True)
class FactoryTopology:
    gateway_position: tuple[float, float]
    nodes: tuple[FactoryNode, ...]
    mode: str = IN_BAND
    chain_order: tuple[str, ...] | None = None
    service_area: tuple[float, float] = (100.0, 100.0)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        if self.mode not in (IN_BAND, OUT_OF_BAND):
            raise ValueError(f"mode must be {IN_BAND!r} or {OUT_OF_BAND!r}")
        if self.mode == IN_BAND and self.chain_order is not None and sorted(self.chain_order) != sorted(ids):
            raise ValueError("chain_order must be a permutation of the node ids")

    @property
    def ordered_nodes(self) -> list[FactoryNode]:
        if self.chain_order is None:
            return list(self.nodes)
        by_id = {n.id: n for n in self.nodes}
        return [by_id[i] for i in self.chain_order]

    def distance_m(self, node: FactoryNode) -> float:
        return math.dist(self.gateway_position, node.position)

    @classmethod
    def line(cls, n: int, spacing_m: float = 10.0, mode: str = IN_BAND) -> "FactoryTopology":
        nodes = tuple(FactoryNode(f"n{i + 1}", (spacing_m * (i + 1), 0.0)) for i in range(n))
        return cls((0.0, 0.0), nodes, mode)


@dataclass(frozen=True)
class DistributionParams:
    """Per-hop link and clock parameters shared by every node.

    ``compensation`` applies to out-of-band delivery: "perfect" removes the
    air propagation delay exactly, "none" leaves it in full, "estimate"
    uses the true distance plus ``distance_error_m``.
    """

    link: PtpLink = field(default_factory=PtpLink)
    clock: SimClock = field(default_factory=SimClock)
    gateway_clock: SimClock = field(default_factory=SimClock)
    initial_offset_spread_ns: float = 1e6
    sync_time_ns: float = 1e9
    turnaround_ns: float = 1e4
    compensation: str = "perfect"
    distance_error_m: float = 0.0

    def __post_init__(self):
        if self.compensation not in COMPENSATION_MODES:
            raise ValueError(f"compensation must be one of {COMPENSATION_MODES}")


@dataclass(frozen=True)
class OffsetEstimate:
    offset_ns: float
    mean_path_delay_ns: float
    true_offset_ns: float

    @property
    def error_ns(self) -> float:
        return self.offset_ns - self.true_offset_ns


def _read(clock: SimClock, ideal_time_ns: float, rng: np.random.Generator) -> float:
    t = ideal_time_ns + clock.error_at(ideal_time_ns)
    g = clock.timestamp_granularity_ns
    if g > 0:
        t = g * np.round(t / g)  # half-to-even
    if clock.timestamp_jitter_sigma_ns > 0:
        t += rng.normal(0.0, clock.timestamp_jitter_sigma_ns)
    return float(t)


def timestamp(clock: SimClock, ideal_time_ns: float, seed=None) -> float:
    return _read(clock, ideal_time_ns, np.random.default_rng(seed))


def _exchange(master, slave, link, ideal_time_ns, rng, turnaround_ns=1e4) -> OffsetEstimate:
    t_sync_rx = ideal_time_ns + link.delay_ms_to_slave_ns
    t_req_tx = t_sync_rx + turnaround_ns
    t_req_rx = t_req_tx + link.delay_slave_to_ms_ns
    t1 = _read(master, ideal_time_ns, rng)
    t2 = _read(slave, t_sync_rx, rng)
    t3 = _read(slave, t_req_tx, rng)
    t4 = _read(master, t_req_rx, rng)
    fwd, back = t2 - t1, t4 - t3
    true = slave.error_at(t_sync_rx) - master.error_at(t_sync_rx)
    return OffsetEstimate((fwd - back) / 2.0, (fwd + back) / 2.0, true)


def two_step_exchange(
    master: SimClock, slave: SimClock, link: PtpLink, ideal_time_ns: float, seed=None, turnaround_ns: float = 1e4
) -> OffsetEstimate:
    """Sync / Delay_Req round: t1 master tx, t2 slave rx, t3 slave tx, t4 master rx."""
    return _exchange(master, slave, link, ideal_time_ns, np.random.default_rng(seed), turnaround_ns)


def _corrected(clock: SimClock, est: OffsetEstimate) -> SimClock:
    return replace(clock, offset_ns=clock.offset_ns - est.offset_ns)


def distribute_in_band(topology: FactoryTopology, params: DistributionParams, seed=None) -> dict[str, float]:
    """Gateway syncs node 1, node 1 syncs node 2, ... along the chain."""
    nodes = topology.ordered_nodes
    if not nodes:
        raise ValueError("in-band distribution needs at least one node")
    rng = np.random.default_rng(seed)
    t = params.sync_time_ns
    master = params.gateway_clock
    errors = {}
    for node in nodes:
        slave = replace(params.clock, offset_ns=rng.uniform(-1, 1) * params.initial_offset_spread_ns)
        est = _exchange(master, slave, params.link, t, rng, params.turnaround_ns)
        synced = _corrected(slave, est)
        errors[node.id] = params.gateway_clock.error_at(t) - synced.error_at(t)
        master = synced
    return errors


def distribute_out_of_band(topology: FactoryTopology, params: DistributionParams, seed=None) -> dict[str, float]:
    """One broadcast delivery per node straight from the gateway.

    Each node's error is its single-hop exchange residual plus whatever
    part of the air propagation delay the gateway fails to compensate.
    """
    rng = np.random.default_rng(seed)
    t = params.sync_time_ns
    errors = {}
    for node in topology.nodes:
        slave = replace(params.clock, offset_ns=rng.uniform(-1, 1) * params.initial_offset_spread_ns)
        est = _exchange(params.gateway_clock, slave, params.link, t, rng, params.turnaround_ns)
        synced = _corrected(slave, est)
        d = topology.distance_m(node)
        true_prop = d / SPEED_OF_LIGHT * 1e9
        if params.compensation == "perfect":
            comp = true_prop
        elif params.compensation == "none":
            comp = 0.0
        else:
            comp = max(0.0, d + params.distance_error_m) / SPEED_OF_LIGHT * 1e9
        errors[node.id] = params.gateway_clock.error_at(t) - synced.error_at(t) + (true_prop - comp)
    return errors


def distribute(topology: FactoryTopology, params: DistributionParams, seed=None) -> dict[str, float]:
    if topology.mode == IN_BAND:
        return distribute_in_band(topology, params, seed)
    return distribute_out_of_band(topology, params, seed)
