"""Per-block records and the columnar trace of a whole run."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TraceRecord:
    """What happened in one block.

    ``commodity`` and ``set_id`` are -1 when the network idled. ``queues``
    maps state names (``Q``, ``Qr``, ``Z`` or ``Qp``, ``P``, ``Zc``, ``V``)
    to copies of the state at the start of the block.
    """

    t: int
    commodity: int
    set_id: int
    objective: float
    mu: np.ndarray  # (L,) flow on each link
    f: np.ndarray  # (N,) leakage at each node, scheduled commodity
    admitted: np.ndarray  # (S,)
    utility: np.ndarray  # (S,)
    queues: dict = field(default_factory=dict)
    boundary: np.ndarray | None = None  # (S,) new message started (finite-block only)
    rate: np.ndarray | None = None  # (S,) encoding rate of the message in flight
    completed: np.ndarray | None = None  # (S,) message finished this block
    outage: np.ndarray | None = None  # (S,) outage flag of a finished message


@dataclass
class Messages:
    """Completed finite-block messages, one entry per message."""

    source: np.ndarray
    index: np.ndarray
    start: np.ndarray
    end: np.ndarray
    rate: np.ndarray
    outage: np.ndarray
    padding: np.ndarray

    @classmethod
    def empty(cls) -> "Messages":
        i, x = np.zeros(0, dtype=np.int64), np.zeros(0)
        return cls(i, i.copy(), i.copy(), i.copy(), x, np.zeros(0, dtype=bool), x.copy())

    def __len__(self) -> int:
        return len(self.source)

    def of(self, s: int) -> "Messages":
        m = self.source == s
        return Messages(*(getattr(self, k)[m] for k in self.__dataclass_fields__))

    @classmethod
    def concat(cls, parts) -> "Messages":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, k) for p in parts]) for k in cls.__dataclass_fields__))


@dataclass
class Trace:
    """Columnar per-block log of one run.

    Leakage ``f[t, j]`` belongs to commodity ``commodity[t]``; only one
    commodity transmits per block.
    """

    algorithm: str
    node_names: tuple[str, ...]
    link_names: tuple[tuple[str, str], ...]
    source_names: tuple[str, ...]
    link_src: np.ndarray
    comm_src: np.ndarray
    intermediate: np.ndarray
    t: np.ndarray
    commodity: np.ndarray
    set_id: np.ndarray
    objective: np.ndarray
    mu: np.ndarray
    f: np.ndarray
    admitted: np.ndarray
    utility: np.ndarray
    queues: dict = field(default_factory=dict)
    rate: np.ndarray | None = None
    boundary: np.ndarray | None = None
    messages: Messages | None = None
    msg_bits: np.ndarray | None = None
    nominal_rate: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_sources(self) -> int:
        return len(self.source_names)

    def service(self, s: int) -> np.ndarray:
        """Bits leaving source ``s`` in each block."""
        out = self.mu[:, self.link_src == self.comm_src[s]].sum(axis=1)
        return np.where(self.commodity == s, out, 0.0)

    def leakage(self, s: int) -> np.ndarray:
        """(T, N) leakage of commodity ``s`` at each node."""
        return np.where((self.commodity == s)[:, None], self.f, 0.0)

    def window(self, start: int, stop: int | None = None) -> "Trace":
        sl = slice(start, stop)
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k in ("t", "commodity", "set_id", "objective", "mu", "f", "admitted", "utility", "rate", "boundary"):
            if kw[k] is not None:
                kw[k] = kw[k][sl]
        kw["queues"] = {k: v[sl] for k, v in self.queues.items()}
        if self.messages is not None and len(kw["t"]):
            lo, hi = kw["t"][0], kw["t"][-1]
            m = self.messages
            keep = (m.end >= lo) & (m.end <= hi)
            kw["messages"] = Messages(*(getattr(m, k)[keep] for k in Messages.__dataclass_fields__))
        return Trace(**kw)
