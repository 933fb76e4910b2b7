"""Block-fading link rates.

Power gains are exponential (Rayleigh fading) and iid across blocks. Each
link draws from its own generator, keyed by the run seed and the link name,
so adding or removing a link leaves the other links' draws unchanged.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate

from confnet.topology import Link, Topology

SHANNON = "shannon-log"
CONSTANT = "constant"


@dataclass(frozen=True)
class ChannelParams:
    """Per-link channel description, indexed like ``Topology.links``.

    ``gains`` are mean power gains (shannon-log kind), ``rates`` fixed
    bits/channel-use (constant kind). ``power`` is the noise-normalized
    transmit power.
    """

    gains: tuple[float, ...] = ()
    power: float = 1.0
    kind: str = SHANNON
    log_base: float = 2.0
    rates: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == SHANNON:
            if not self.gains or any(not (g > 0 and math.isfinite(g)) for g in self.gains):
                raise ValueError("shannon-log channel needs positive finite mean gains")
            if not (self.power > 0 and math.isfinite(self.power)):
                raise ValueError(f"transmit power must be positive, got {self.power}")
            if not (self.log_base > 1):
                raise ValueError(f"log base must exceed 1, got {self.log_base}")
        elif self.kind == CONSTANT:
            if not self.rates or any(not (r >= 0 and math.isfinite(r)) for r in self.rates):
                raise ValueError("constant channel needs nonnegative finite per-link rates")
        else:
            raise ValueError(f"unknown channel kind {self.kind!r}")

    @property
    def n_links(self) -> int:
        return len(self.gains) if self.kind == SHANNON else len(self.rates)

    def rate_of_gain(self, h):
        return np.log1p(self.power * np.asarray(h, dtype=float)) / math.log(self.log_base)


@dataclass(frozen=True)
class ChannelBlock:
    t: int
    gains: np.ndarray  # realized power gains, NaN for constant channels
    rates: np.ndarray  # bits/channel-use


def link_key(link: Link) -> int:
    return zlib.crc32(f"{link[0]}->{link[1]}".encode())


class ChannelStream:
    """Independent generator per link for one run.

    ``draw(n)`` and ``n`` calls of ``next_block`` consume the streams the
    same way and return identical values.
    """

    def __init__(self, topology: Topology, params: ChannelParams, seed: int):
        if params.n_links != len(topology.links):
            raise ValueError(f"{params.n_links} channel entries for {len(topology.links)} links")
        self.params = params
        self.t = 0
        self._gens = [
            np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(link_key(l),))))
            for l in topology.links
        ]

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Gains and rates for the next ``n`` blocks, each of shape (n, L)."""
        p = self.params
        L = p.n_links
        if p.kind == CONSTANT:
            gains = np.full((n, L), np.nan)
            rates = np.broadcast_to(np.asarray(p.rates, dtype=float), (n, L)).copy()
        else:
            gains = np.empty((n, L))
            for l, (g, gen) in enumerate(zip(p.gains, self._gens)):
                gains[:, l] = gen.exponential(g, size=n)
            rates = p.rate_of_gain(gains)
        self.t += n
        return gains, rates

    def next_block(self) -> ChannelBlock:
        t = self.t
        gains, rates = self.draw(1)
        return ChannelBlock(t, gains[0], rates[0])


def sample_block(stream: ChannelStream, topology: Topology, params: ChannelParams, t: int) -> ChannelBlock:
    """Realization of block ``t``; blocks must be requested in order."""
    if stream.params is not params and stream.params != params:
        raise ValueError("stream was built for different channel parameters")
    if t != stream.t:
        raise ValueError(f"stream is at block {stream.t}, requested {t}")
    return stream.next_block()


def mean_rate(params: ChannelParams, link: int) -> float:
    """Expected rate of link index ``link`` under its fading distribution."""
    if params.kind == CONSTANT:
        return float(params.rates[link])
    g = params.gains[link]
    scale = params.power * g
    # substitute h = g*u so the integrand is log(1 + P g u) e^{-u}
    val, _ = integrate.quad(
        lambda u: math.log1p(scale * u) * math.exp(-u), 0.0, math.inf, epsabs=0.0, epsrel=1e-10, limit=200
    )
    return val / math.log(params.log_base)


def channel_from_links(topology: Topology, spec: Mapping[Link, float] | Sequence[float], **kw) -> ChannelParams:
    """Build params from a per-link mapping or a sequence in link order."""
    if isinstance(spec, Mapping):
        values = tuple(float(spec[l]) for l in topology.links)
    else:
        values = tuple(float(v) for v in spec)
    if kw.get("kind", SHANNON) == CONSTANT:
        return ChannelParams(rates=values, **kw)
    return ChannelParams(gains=values, **kw)
