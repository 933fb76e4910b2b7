"""Queue state of both controllers and their one-block update rules.

These are plain numpy versions of the recursions; the compiled loops in
``_kernels`` perform the same arithmetic and are checked against them.
Node-indexed arrays have one column per node of the topology; entries of
non-intermediate nodes stay zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


def _check_nonneg(**arrays):
    for name, a in arrays.items():
        a = np.asarray(a, dtype=float)
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError(f"{name} must be nonnegative and finite")


@dataclass
class NetState1:
    Q: np.ndarray  # (S,) source backlog
    Qr: np.ndarray  # (S, N) relay backlog per commodity
    Z: np.ndarray  # (S, N) leakage virtual queues

    @classmethod
    def zeros(cls, n_sources: int, n_nodes: int) -> "NetState1":
        return cls(np.zeros(n_sources), np.zeros((n_sources, n_nodes)), np.zeros((n_sources, n_nodes)))

    def copy(self) -> "NetState1":
        return NetState1(self.Q.copy(), self.Qr.copy(), self.Z.copy())


@dataclass
class NetState2:
    Qp: np.ndarray  # (S,) confidential bits waiting for encoding
    P: np.ndarray  # (S,) bits of the current message still at the source
    k: np.ndarray  # (S,) messages started so far
    rate: np.ndarray  # (S,) confidential encoding rate of the current message
    Zc: np.ndarray  # (S, N) leakage budget left for the current message
    V: np.ndarray  # (S,) outage virtual queue, rate units
    Qr: np.ndarray  # (S, N)
    outage: np.ndarray  # (S,) bool, current message already leaked too much
    padding: np.ndarray  # (S,) dummy bits needed to fill the current message
    start: np.ndarray  # (S,) block at which the current message started

    @classmethod
    def zeros(cls, n_sources: int, n_nodes: int) -> "NetState2":
        S, N = n_sources, n_nodes
        return cls(
            Qp=np.zeros(S),
            P=np.zeros(S),
            k=np.zeros(S, dtype=np.int64),
            rate=np.zeros(S),
            Zc=np.zeros((S, N)),
            V=np.zeros(S),
            Qr=np.zeros((S, N)),
            outage=np.zeros(S, dtype=bool),
            padding=np.zeros(S),
            start=np.zeros(S, dtype=np.int64),
        )

    def copy(self) -> "NetState2":
        return NetState2(**{k: np.array(v, copy=True) for k, v in self.__dict__.items()})


def relay_queues(Qr, mu, net) -> np.ndarray:
    """[Q - out]^+ + in at intermediate nodes; ``mu`` is (S, L)."""
    S, N = Qr.shape
    out = np.zeros((S, N))
    inc = np.zeros((S, N))
    np.add.at(out, (slice(None), net.link_src), mu)
    np.add.at(inc, (slice(None), net.link_dst), mu)
    new = np.maximum(Qr - out, 0.0) + inc
    return np.where(net.intermediate[None, :], new, Qr)


def source_service(mu, net) -> np.ndarray:
    """(S,) bits leaving each commodity's own source."""
    return np.array([mu[s, net.link_src == net.comm_src[s]].sum() for s in range(mu.shape[0])])


def update_state1(state: NetState1, A, mu, f, alpha, net) -> NetState1:
    """Infinite-block queues after one block: service first, then arrivals.

    ``A`` is (S,) admitted bits, ``mu`` (S, L) flows, ``f`` (S, N) leakage,
    ``net`` the integer tables of the topology.
    """
    A, mu, f, alpha = (np.asarray(x, dtype=float) for x in (A, mu, f, alpha))
    _check_nonneg(A=A, mu=mu, f=f)
    Q = np.maximum(state.Q - source_service(mu, net), 0.0) + A
    Qr = relay_queues(state.Qr, mu, net)
    Z = np.maximum(state.Z + f - ((1.0 - alpha) * A)[:, None], 0.0)
    Z = np.where(net.intermediate[None, :], Z, 0.0)
    return NetState1(Q, Qr, Z)


def update_state2_block(state: NetState2, mu, f, net) -> NetState2:
    """Finite-block queues after one block of transmission.

    A commodity whose budget ``Zc`` at some node is used up by this block's
    leakage gets its outage flag set.
    """
    mu, f = np.asarray(mu, dtype=float), np.asarray(f, dtype=float)
    _check_nonneg(mu=mu, f=f)
    busy = (mu.sum(axis=1) > 0) | (f.sum(axis=1) > 0)
    if np.any(busy & (state.P <= 0)):
        raise ValueError("transmission for a source with no message in flight")
    new = state.copy()
    new.P = np.maximum(state.P - source_service(mu, net), 0.0)
    leaked = (f > 0) & net.intermediate[None, :]
    new.outage = state.outage | np.any(leaked & (state.Zc - f <= 0), axis=1)
    new.Zc = np.where(leaked, np.maximum(state.Zc - f, 0.0), state.Zc)
    new.Qr = relay_queues(state.Qr, mu, net)
    return new


def message_boundary(state: NetState2, s: int, r: float, A, gamma: float, msg_bits: float,
                     nominal_rate: float, net, t: int = 0) -> NetState2:
    """Start message ``k+1`` of source ``s`` at confidential rate ``r``.

    The outage queue is charged for the message that just ended, if any;
    ``A`` confidential bits are admitted after the encoder takes its share.
    """
    if state.P[s] > 0:
        raise ValueError(f"source {s} still has {state.P[s]:g} bits of its current message")
    if not 0.0 <= r <= nominal_rate:
        raise ValueError(f"encoding rate {r} outside [0, {nominal_rate}]")
    new = state.copy()
    if state.k[s] > 0:
        prev = state.rate[s]
        if state.outage[s]:
            new.V[s] = max(state.V[s] + prev - gamma * prev, 0.0)
        else:
            new.V[s] = max(state.V[s] - gamma * prev, 0.0)
    n_blocks = msg_bits / nominal_rate
    new.k[s] += 1
    new.padding[s] = max(n_blocks * r - state.Qp[s], 0.0)
    new.Qp[s] = max(state.Qp[s] - n_blocks * r, 0.0) + A
    new.P[s] = msg_bits
    new.Zc[s] = np.where(net.intermediate, (nominal_rate - r) * n_blocks, 0.0)
    new.rate[s] = r
    new.outage[s] = False
    new.start[s] = t
    return new


def with_arrivals(state, A):
    """Add per-source arrivals to the leading queue of either state type."""
    if isinstance(state, NetState1):
        return replace(state, Q=state.Q + A)
    return replace(state, Qp=state.Qp + A)
