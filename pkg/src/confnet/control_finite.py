"""Control with finite-length secrecy-encoded messages.

Confidential bits wait in ``Qp`` until the source's previous message has
left; then a message of fixed size is encoded at a confidential rate chosen
against the outage queue ``V``. While a message is in flight each relay has
a countdown of how many more bits it may learn before the message is in
secrecy outage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from confnet import _kernels as K
from confnet.channel import ChannelBlock
from confnet.control_infinite import (
    DEFAULT_A_MAX,
    DEFAULT_H,
    DEFAULT_KAPPA,
    UTILITY_FLOOR,
    decide,
    ScheduleDecision,
)
from confnet.queues import NetState2, message_boundary, update_state2_block, with_arrivals
from confnet.records import TraceRecord
from confnet.topology import LinkTables

BITS = "bits"
RATE = "rate"


def quadratic_outage(r, nominal_rate):
    """Outage probability estimate min(1, r^2 / R^2)."""
    r = np.asarray(r, dtype=float)
    return np.minimum(1.0, (r / nominal_rate) ** 2)


@dataclass(frozen=True)
class Alg2Params:
    """Finite-block controller settings, one tuple entry per source.

    ``msg_bits`` is the message size in bits and ``nominal_rate`` the rate
    it is sent at, so a message spans ``msg_bits / nominal_rate`` channel
    uses of source service. ``outage_weight`` selects how the outage queue
    is weighed against the confidential backlog when choosing a rate:
    ``"bits"`` scales it by the message length so both terms count bits,
    ``"rate"`` uses it as is.
    """

    gamma: tuple[float, ...]
    msg_bits: tuple[float, ...]
    nominal_rate: tuple[float, ...] = ()
    H: float = DEFAULT_H
    kappa: float = DEFAULT_KAPPA
    A_max: float = DEFAULT_A_MAX
    u_floor: float = UTILITY_FLOOR
    grid_points: int = 200
    outage_weight: str = BITS
    p_out: Callable | None = None  # p_out(r, nominal_rate); quadratic when None

    def __post_init__(self):
        if not self.nominal_rate:
            object.__setattr__(self, "nominal_rate", tuple(1.0 for _ in self.gamma))
        n = len(self.gamma)
        if len(self.msg_bits) != n or len(self.nominal_rate) != n:
            raise ValueError("gamma, msg_bits and nominal_rate need one entry per source")
        if not all(0.0 <= g <= 1.0 for g in self.gamma):
            raise ValueError(f"gamma values must lie in [0, 1], got {self.gamma}")
        if not all(b > 0 for b in self.msg_bits) or not all(r > 0 for r in self.nominal_rate):
            raise ValueError("message sizes and nominal rates must be positive")
        if self.grid_points < 2:
            raise ValueError("rate grid needs at least two points")
        if self.outage_weight not in (BITS, RATE):
            raise ValueError(f"unknown outage weighting {self.outage_weight!r}")
        if self.H <= 0 or self.A_max <= 0:
            raise ValueError("H and A_max must be positive")

    def utility(self, x):
        return self.kappa + np.log(np.maximum(x, self.u_floor))

    def message_blocks(self, s: int) -> float:
        return self.msg_bits[s] / self.nominal_rate[s]

    def v_weight(self, s: int) -> float:
        return self.message_blocks(s) if self.outage_weight == BITS else 1.0

    def rate_grid(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        grid = np.linspace(0.0, self.nominal_rate[s], self.grid_points)
        model = self.p_out or quadratic_outage
        p = np.clip(np.asarray(model(grid, self.nominal_rate[s]), dtype=float), 0.0, 1.0)
        return grid, p


def select_encoding_rate(Qp: float, V: float, params: Alg2Params, s: int) -> float:
    """Confidential rate of the next message of source ``s``.

    Grid maximization of r*Qp - w*V*(r*p(r) - r*gamma), ``w`` being the
    outage weighting; ties go to the smaller rate.
    """
    grid, p = params.rate_grid(s)
    return float(K.pick_rate(float(Qp), params.v_weight(s) * float(V), params.gamma[s], grid, p))


def flow_control_2(Qp: float, params: Alg2Params) -> float:
    """Confidential bits admitted: argmax of H*U(a) - Qp*a over [0, A_max]."""
    return K.admit_log_utility(float(Qp), 0.0, params.H, params.A_max)


def backlog_matrix(state: NetState2, tables: LinkTables, params: Alg2Params) -> np.ndarray:
    """Source weight is the rate-normalized confidential backlog plus the partial message."""
    B = state.Qr.copy()
    for s, (src, dst) in enumerate(zip(tables.net.comm_src, tables.net.comm_dst)):
        R_nom, r = params.nominal_rate[s], state.rate[s]
        norm = R_nom / r if r * K.NORM_CAP > R_nom else K.NORM_CAP
        B[s, src] = norm * state.Qp[s] + state.P[s]
        B[s, dst] = 0.0
    return B


def schedule_2(state: NetState2, block: ChannelBlock, tables: LinkTables, params: Alg2Params) -> ScheduleDecision:
    """Max-weight choice where leakage adds ``Zc``-weighted value.

    The countdown queues enter with a plus sign: they count remaining
    budget rather than accumulated leakage.
    """
    return decide(tables, backlog_matrix(state, tables, params), state.Zc, 1.0, block.rates)


def step_2(state: NetState2, block: ChannelBlock, tables: LinkTables,
           params: Alg2Params) -> tuple[NetState2, TraceRecord]:
    """One block: new messages where needed, then scheduling, service and admission."""
    net = tables.net
    S = len(net.comm_src)
    A = np.array([flow_control_2(state.Qp[s], params) for s in range(S)])
    U = params.utility(A)
    boundary = np.zeros(S, dtype=bool)
    for s in range(S):
        if state.P[s] <= 0:
            r = select_encoding_rate(state.Qp[s], state.V[s], params, s)
            state = message_boundary(state, s, r, 0.0, params.gamma[s], params.msg_bits[s],
                                     params.nominal_rate[s], net, t=block.t)
            boundary[s] = True
    snapshot = {k: getattr(state, k).copy() for k in ("Qp", "P", "Zc", "V", "Qr")}
    decision = schedule_2(state, block, tables, params)
    mu, f = decision.per_commodity(S)
    new = with_arrivals(update_state2_block(state, mu, f, net), A)
    completed = np.zeros(S, dtype=bool)
    if not decision.idle:
        completed[decision.commodity] = new.P[decision.commodity] <= 0
    record = TraceRecord(
        t=block.t,
        commodity=decision.commodity,
        set_id=decision.set_id,
        objective=decision.objective,
        mu=decision.mu,
        f=decision.f,
        admitted=A,
        utility=U,
        queues=snapshot,
        boundary=boundary,
        rate=state.rate.copy(),
        completed=completed,
        outage=new.outage & completed,
    )
    return new, record
