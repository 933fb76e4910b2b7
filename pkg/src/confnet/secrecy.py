"""Secrecy figures computed from run traces, plus the xor two-path demo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from confnet.records import Messages, Trace

MIN_MESSAGES = 50


@dataclass
class SecrecyReport:
    """Per-source secrecy summary over a window of blocks.

    ``confidential_rate`` is the achievable rate estimate: mean source
    service minus the largest mean leakage at any intermediate node.
    """

    service: np.ndarray  # (S,)
    leakage: np.ndarray  # (S, N) mean leakage per node, zero outside relays
    max_leakage: np.ndarray  # (S,)
    confidential_rate: np.ndarray  # (S,)
    throughput: np.ndarray  # (S,) confidential bits delivered per block
    outage_fraction: np.ndarray | None = None  # (S,) rate-weighted, finite-block only
    n_messages: np.ndarray | None = None


def _window(trace: Trace, window: int | None) -> Trace:
    if window is None:
        window = len(trace)
    if window <= 0 or len(trace) == 0:
        raise ValueError("empty averaging window")
    if window > len(trace):
        raise ValueError(f"window of {window} blocks exceeds trace length {len(trace)}")
    return trace.window(len(trace) - window)


def leakage_rates(trace: Trace, s: int, window: int | None = None) -> np.ndarray:
    """Mean information per block gathered by each node about commodity ``s``."""
    tr = _window(trace, window)
    return np.where(tr.intermediate, tr.leakage(s).mean(axis=0), 0.0)


def estimate_confidential_rate(trace: Trace, s: int, window: int | None = None) -> float:
    """Mean service of source ``s`` minus its worst mean leakage at a relay.

    ``window`` counts the final blocks of the trace to average over; the
    whole trace is used when it is None.
    """
    tr = _window(trace, window)
    leak = leakage_rates(tr, s)
    return float(tr.service(s).mean() - leak.max(initial=0.0))


def outage_fraction(messages: Messages, s: int) -> tuple[float, int]:
    """Share of confidential bits of source ``s`` sent in messages that hit outage."""
    m = messages.of(s)
    total = m.rate.sum()
    if len(m) == 0 or total <= 0:
        return 0.0, len(m)
    return float(m.rate[m.outage].sum() / total), len(m)


class EmpiricalOutage:
    """Outage frequency as a function of encoding rate, from finished messages.

    Rates are grouped into equal bins over [0, nominal_rate]; empty bins
    take the value interpolated between the nearest populated bins. The
    object is callable as ``p_out(r, nominal_rate)``.
    """

    def __init__(self, rates, outages, nominal_rate: float, bins: int = 10):
        rates = np.asarray(rates, dtype=float)
        outages = np.asarray(outages, dtype=bool)
        self.nominal_rate = float(nominal_rate)
        self.edges = np.linspace(0.0, self.nominal_rate, bins + 1)
        idx = self._bin(rates)
        self.counts = np.bincount(idx, minlength=bins)
        self.hits = np.bincount(idx, weights=outages.astype(float), minlength=bins)
        filled = self.counts > 0
        centers = 0.5 * (self.edges[:-1] + self.edges[1:])
        freq = self.hits[filled] / self.counts[filled]
        self.values = np.interp(centers, centers[filled], freq)

    def _bin(self, r):
        i = np.searchsorted(self.edges, np.asarray(r, dtype=float), side="right") - 1
        return np.clip(i, 0, len(self.edges) - 2)

    def __call__(self, r, nominal_rate=None):
        return self.values[self._bin(r)]


def empirical_outage_prob(trace: Trace, s: int, bins: int = 10) -> EmpiricalOutage:
    """Binned outage frequency of source ``s``'s finished messages."""
    if trace.messages is None:
        raise ValueError("trace has no message log (not a finite-block run)")
    m = trace.messages.of(s)
    if len(m) < MIN_MESSAGES:
        raise ValueError(f"only {len(m)} finished messages, need at least {MIN_MESSAGES}")
    return EmpiricalOutage(m.rate, m.outage, trace.nominal_rate[s], bins)


def secrecy_report(trace: Trace, window: int | None = None, alpha=None) -> SecrecyReport:
    """Summary over the last ``window`` blocks.

    Throughput is ``alpha`` times the admitted rate for infinite-block runs
    and the admitted confidential rate for finite-block runs.
    """
    tr = _window(trace, window)
    S = tr.n_sources
    service = np.array([tr.service(s).mean() for s in range(S)])
    leakage = np.array([leakage_rates(tr, s) for s in range(S)])
    max_leak = leakage.max(axis=1, initial=0.0)
    report = SecrecyReport(service, leakage, max_leak, service - max_leak, np.zeros(S))
    if tr.algorithm == "alg2":
        report.throughput = tr.admitted.mean(axis=0)
        frac = [outage_fraction(tr.messages, s) for s in range(S)]
        report.outage_fraction = np.array([x for x, _ in frac])
        report.n_messages = np.array([n for _, n in frac])
    elif alpha is not None:
        report.throughput = np.asarray(alpha) * tr.admitted.mean(axis=0)
    return report


def xor_split(bits, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split a bit string into a uniform key and the message masked by it.

    Either share alone is uniform and independent of the message; sending
    them over disjoint paths keeps every single relay ignorant.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if np.any(bits > 1):
        raise ValueError("message must contain only 0/1 values")
    key = rng.integers(0, 2, size=bits.shape, dtype=np.uint8)
    return key, bits ^ key


def xor_combine(share1, share2) -> np.ndarray:
    share1, share2 = np.asarray(share1, dtype=np.uint8), np.asarray(share2, dtype=np.uint8)
    if share1.shape != share2.shape:
        raise ValueError(f"share lengths differ: {share1.shape} vs {share2.shape}")
    return share1 ^ share2


def uniformity_pvalue(bits) -> float:
    """Chi-square p-value for equal frequencies of 0 and 1."""
    bits = np.asarray(bits)
    counts = np.bincount(bits.astype(np.int64).ravel(), minlength=2)[:2]
    return float(stats.chisquare(counts).pvalue)


def xor_demo(n_bits: int, seed: int = 1) -> dict:
    """Split all-zero and all-one messages and test each share for uniformity."""
    rng = np.random.default_rng(seed)
    out = {"bits": n_bits}
    failures = 0
    for value in (0, 1):
        msg = np.full(n_bits, value, dtype=np.uint8)
        a, b = xor_split(msg, rng)
        failures += int(np.count_nonzero(xor_combine(a, b) != msg))
        out[f"p_share1_msg{value}"] = uniformity_pvalue(a)
        out[f"p_share2_msg{value}"] = uniformity_pvalue(b)
    m = rng.integers(0, 2, size=n_bits, dtype=np.uint8)
    failures += int(np.count_nonzero(xor_combine(*xor_split(m, rng)) != m))
    out["roundtrip_failures"] = failures
    return out
