"""Flow control and scheduling when messages are encoded over infinitely long blocks.

Each source keeps a fraction ``alpha`` of its admitted bits confidential and
pads the rest with randomization bits. Virtual queues ``Z`` grow with what
an intermediate node learns and drain with the randomization budget, so
keeping them stable keeps every node's information below that budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from confnet import _kernels as K
from confnet.channel import ChannelBlock
from confnet.queues import NetState1, update_state1
from confnet.records import TraceRecord
from confnet.topology import LinkTables, Topology, overhearing_neighbors

DEFAULT_H = 100.0
DEFAULT_KAPPA = 3.0
DEFAULT_A_MAX = 100.0
UTILITY_FLOOR = 1e-6


@dataclass(frozen=True)
class Alg1Params:
    alpha: tuple[float, ...]
    H: float = DEFAULT_H
    kappa: float = DEFAULT_KAPPA
    A_max: float = DEFAULT_A_MAX
    u_floor: float = UTILITY_FLOOR

    def __post_init__(self):
        if not all(0.0 < a < 1.0 for a in self.alpha):
            raise ValueError(f"alpha values must lie in (0, 1), got {self.alpha}")
        if self.H <= 0 or self.A_max <= 0:
            raise ValueError("H and A_max must be positive")

    def utility(self, x):
        return self.kappa + np.log(np.maximum(x, self.u_floor))


@dataclass
class ScheduleDecision:
    """One block's scheduling choice. Idle blocks have ``commodity == -1``."""

    commodity: int
    set_id: int
    mask: int
    links: tuple[int, ...]
    mu: np.ndarray  # (L,) flow of the scheduled commodity
    f: np.ndarray  # (N,) leakage of the scheduled commodity
    objective: float
    candidate: int = field(default=K.IDLE, repr=False)

    @property
    def idle(self) -> bool:
        return self.commodity < 0

    def per_commodity(self, n_sources: int) -> tuple[np.ndarray, np.ndarray]:
        """(S, L) flows and (S, N) leakage with zero rows for idle commodities."""
        mu = np.zeros((n_sources, len(self.mu)))
        f = np.zeros((n_sources, len(self.f)))
        if not self.idle:
            mu[self.commodity] = self.mu
            f[self.commodity] = self.f
        return mu, f


def flow_control_1(Q: float, Z_total: float, params: Alg1Params, s: int) -> float:
    """Bits source ``s`` admits this block.

    Maximizes H*U(alpha*A) - Q*A + (1-alpha)*Z_total*A over [0, A_max]; for
    the log utility the maximizer is H / (Q - (1-alpha)*Z_total), clamped.
    """
    return K.admit_log_utility(float(Q), (1.0 - params.alpha[s]) * float(Z_total), params.H, params.A_max)


def decide(tables: LinkTables, B, Z, zsign: float, rates) -> ScheduleDecision:
    """Best candidate for backlogs ``B`` (S, N) and penalty queues ``Z``."""
    net = tables.net
    rates = np.ascontiguousarray(rates, dtype=float)
    W = np.zeros((len(net.comm_src), len(net.link_src)))
    k, obj = K.best_candidate(net, np.ascontiguousarray(B, dtype=float), np.ascontiguousarray(Z, dtype=float),
                              zsign, rates, W)
    mu = np.zeros(len(net.link_src))
    f = np.zeros(tables.n_nodes)
    K.realize(net, k, rates, mu, f)
    if k < 0:
        return ScheduleDecision(K.IDLE, K.IDLE, 0, (), mu, f, 0.0)
    cand = tables.candidates[k]
    return ScheduleDecision(cand.commodity, cand.set_id, cand.mask, cand.links, mu, f, float(obj), k)


def backlog_matrix(state: NetState1, tables: LinkTables) -> np.ndarray:
    """Per-commodity backlog at every node: own source, relays, zero at destinations."""
    B = state.Qr.copy()
    for s, (src, dst) in enumerate(zip(tables.net.comm_src, tables.net.comm_dst)):
        B[s, src] = state.Q[s]
        B[s, dst] = 0.0
    return B


def schedule_1(state: NetState1, block: ChannelBlock, tables: LinkTables) -> ScheduleDecision:
    """Max-weight choice of commodity and links, charged for leakage.

    The value of a choice is the backlog-differential-weighted rate of its
    links minus the leakage it causes weighted by the ``Z`` queues. The
    network idles unless some choice has strictly positive value.
    """
    return decide(tables, backlog_matrix(state, tables), state.Z, -1.0, block.rates)


def leakage_vector(decision: ScheduleDecision, block: ChannelBlock, topology: Topology,
                   overhearing: bool = True) -> np.ndarray:
    """Information each node gathers about the scheduled commodity.

    A relay receiving on an active link learns that link's rate. An idle
    relay hearing one or more active transmitters learns at most the best
    of those links' rates. Sources and destinations are never charged.
    """
    f = np.zeros(len(topology.nodes))
    if decision.idle:
        return f
    active = [topology.links[l] for l in decision.links]
    for l, (i, j) in zip(decision.links, active):
        if topology.is_intermediate(j):
            f[topology.node_index(j)] += block.rates[l]
    if overhearing:
        heard: dict[str, float] = {}
        for i in {i for i, _ in active}:
            for k in overhearing_neighbors(topology, i, active):
                heard[k] = max(heard.get(k, 0.0), block.rates[topology.link_index((i, k))])
        for k, r in heard.items():
            f[topology.node_index(k)] += r
    return f


def step_1(state: NetState1, block: ChannelBlock, tables: LinkTables,
           params: Alg1Params) -> tuple[NetState1, TraceRecord]:
    net = tables.net
    S = len(net.comm_src)
    Z_total = (state.Z * net.intermediate[None, :]).sum(axis=1)
    A = np.array([flow_control_1(state.Q[s], Z_total[s], params, s) for s in range(S)])
    U = params.utility(np.asarray(params.alpha) * A)
    decision = schedule_1(state, block, tables)
    mu, f = decision.per_commodity(S)
    new = update_state1(state, A, mu, f, params.alpha, net)
    record = TraceRecord(
        t=block.t,
        commodity=decision.commodity,
        set_id=decision.set_id,
        objective=decision.objective,
        mu=decision.mu,
        f=decision.f,
        admitted=A,
        utility=U,
        queues={"Q": state.Q.copy(), "Qr": state.Qr.copy(), "Z": state.Z.copy()},
    )
    return new, record
