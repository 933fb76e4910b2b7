"""Simulation runs, long-run metrics and parameter sweeps."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from confnet import _kernels as K
from confnet.channel import CONSTANT, ChannelParams, ChannelStream
from confnet.control_finite import Alg2Params, step_2
from confnet.control_infinite import Alg1Params, step_1
from confnet.queues import NetState1, NetState2
from confnet.records import Messages, Trace
from confnet.secrecy import SecrecyReport, outage_fraction
from confnet.topology import (
    ALL_LINKS,
    NODE_EXCLUSIVE,
    LinkTables,
    Topology,
    enumerate_active_sets,
    link_tables,
)

log = logging.getLogger(__name__)

ALG1 = "alg1"
ALG2 = "alg2"
DEFAULT_HORIZON = 200_000
CHUNK = 50_000


@dataclass(frozen=True)
class RunConfig:
    topology: Topology
    channel: ChannelParams
    algorithm: str
    params: Alg1Params | Alg2Params
    horizon: int = DEFAULT_HORIZON
    warm_up: float = 0.1
    seed: int = 1
    interference: str = NODE_EXCLUSIVE
    overhearing: bool = True
    record_trace: bool = False

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 0.0 <= self.warm_up <= 0.9:
            raise ValueError(f"warm-up fraction must lie in [0, 0.9], got {self.warm_up}")
        if self.algorithm not in (ALG1, ALG2):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        expected = Alg1Params if self.algorithm == ALG1 else Alg2Params
        if not isinstance(self.params, expected):
            raise ValueError(f"{self.algorithm} needs {expected.__name__}")
        n_src = len(self.topology.sources)
        per_source = self.params.alpha if self.algorithm == ALG1 else self.params.gamma
        if len(per_source) != n_src:
            raise ValueError(f"{len(per_source)} per-source settings for {n_src} sources")
        if self.interference == ALL_LINKS and self.channel.kind != CONSTANT:
            raise ValueError("all-links-concurrent interference needs a constant-rate channel")
        if self.channel.n_links != len(self.topology.links):
            raise ValueError("channel must describe every link")

    @property
    def warm_blocks(self) -> int:
        return int(self.warm_up * self.horizon)

    def tables(self) -> LinkTables:
        sets = enumerate_active_sets(self.topology, self.interference)
        # wired links do not broadcast
        return link_tables(self.topology, sets, self.overhearing and self.interference != ALL_LINKS)


@dataclass
class Metrics:
    """Long-run averages over the blocks after warm-up.

    ``admitted`` is the mean admission per block (all bits for the
    infinite-block controller, confidential bits for the finite-block one).
    ``confidential`` is the confidential throughput: ``alpha * admitted`` or
    the admitted confidential rate. ``encoded`` (finite-block only) counts
    the confidential payload written into messages per block, which exceeds
    the admitted rate when messages are padded.
    """

    algorithm: str
    sources: tuple[str, ...]
    nodes: tuple[str, ...]
    window: int
    utility: np.ndarray
    admitted: np.ndarray
    confidential: np.ndarray
    queues: dict
    secrecy: SecrecyReport
    relays: np.ndarray | None = None  # (N,) bool, nodes whose leakage is tracked
    encoded: np.ndarray | None = None
    wall_clock: float = 0.0

    @property
    def total_utility(self) -> float:
        return float(self.utility.sum())

    def flat(self) -> dict:
        """Scalar view keyed like ``utility[s1]`` or ``leakage[s1@2]``."""
        out: dict = {"algorithm": self.algorithm, "window": self.window,
                     "total_utility": self.total_utility, "wall_clock": self.wall_clock}
        sec = self.secrecy
        per_source = {
            "utility": self.utility,
            "admitted": self.admitted,
            "confidential": self.confidential,
            "service": sec.service,
            "max_leakage": sec.max_leakage,
            "confidential_rate": sec.confidential_rate,
        }
        if self.encoded is not None:
            per_source["encoded"] = self.encoded
        if sec.outage_fraction is not None:
            per_source["outage_fraction"] = sec.outage_fraction
            per_source["messages"] = sec.n_messages
        for name, arr in per_source.items():
            for s, src in enumerate(self.sources):
                out[f"{name}[{src}]"] = _scalar(arr[s])
        for s, src in enumerate(self.sources):
            for j, node in enumerate(self.nodes):
                if self._relay(j):
                    out[f"leakage[{src}@{node}]"] = float(sec.leakage[s, j])
        for name, arr in self.queues.items():
            arr = np.asarray(arr)
            if arr.ndim == 1:
                for s, src in enumerate(self.sources):
                    out[f"mean_{name}[{src}]"] = float(arr[s])
            else:
                for s, src in enumerate(self.sources):
                    for j, node in enumerate(self.nodes):
                        if self._relay(j):
                            out[f"mean_{name}[{src}@{node}]"] = float(arr[s, j])
        return out

    def _relay(self, j: int) -> bool:
        return True if self.relays is None else bool(self.relays[j])

    @property
    def total_backlog(self) -> float:
        """Mean real backlog summed over sources and relays."""
        if self.algorithm == ALG1:
            return float(self.queues["Q"].sum() + self.queues["Qr"].sum())
        return float(self.queues["Qp"].sum() + self.queues["P"].sum() + self.queues["Qr"].sum())


def _scalar(x):
    x = np.asarray(x).item()
    return int(x) if isinstance(x, (int, np.integer)) else float(x)


class _Accumulator:
    """Running sums over the post-warm-up window, fed chunk by chunk."""

    def __init__(self, S, N, L):
        self.n = 0
        self.utility = np.zeros(S)
        self.admitted = np.zeros(S)
        self.service = np.zeros(S)
        self.leak = np.zeros((S, N))
        self.encoded = np.zeros(S)

    def add(self, tables: LinkTables, comm, mu, f, A, U, encoded=None):
        net = tables.net
        self.n += len(comm)
        self.utility += U.sum(axis=0)
        self.admitted += A.sum(axis=0)
        for s in range(len(net.comm_src)):
            mine = comm == s
            self.service[s] += mu[mine][:, net.link_src == net.comm_src[s]].sum()
            self.leak[s] += f[mine].sum(axis=0)
        if encoded is not None:
            self.encoded += encoded


def run(config: RunConfig) -> tuple[Metrics, Trace | None]:
    """Simulate ``config.horizon`` blocks; deterministic given the seed."""
    started = time.perf_counter()
    topo = config.topology
    tables = config.tables()
    net = tables.net
    S, N, L = len(topo.sources), len(topo.nodes), len(topo.links)
    T, warm = config.horizon, config.warm_blocks
    stream = ChannelStream(topo, config.channel, config.seed)
    acc = _Accumulator(S, N, L)
    p = config.params
    keep = config.record_trace
    parts: list[dict] = []
    messages: list[Messages] = []

    if config.algorithm == ALG1:
        state = NetState1.zeros(S, N)
        alpha = np.asarray(p.alpha, dtype=float)
        qsum = {"Q": np.zeros(S), "Qr": np.zeros((S, N)), "Z": np.zeros((S, N))}
    else:
        state = NetState2.zeros(S, N)
        qsum = {"Qp": np.zeros(S), "P": np.zeros(S), "V": np.zeros(S), "Qr": np.zeros((S, N))}
        grids = [p.rate_grid(s) for s in range(S)]
        grid = np.array([g for g, _ in grids])
        p_grid = np.array([q for _, q in grids])
        v_weight = np.array([p.v_weight(s) for s in range(S)])
        gamma = np.asarray(p.gamma, dtype=float)
        R_nom = np.asarray(p.nominal_rate, dtype=float)
        msg_bits = np.asarray(p.msg_bits, dtype=float)
        msg_count = np.zeros(1, dtype=np.int64)

    t0 = 0
    while t0 < T:
        n = min(CHUNK, T - t0)
        _, R = stream.draw(n)
        acc_from = min(max(warm - t0, 0), n)
        out = {
            "cand": np.zeros(n, dtype=np.int64),
            "objective": np.zeros(n),
            "admitted": np.zeros((n, S)),
            "mu": np.zeros((n, L)),
            "f": np.zeros((n, N)),
            "utility": np.zeros((n, S)),
        }
        qshape = (n if keep else 1,)
        if config.algorithm == ALG1:
            rec = {"Q": np.zeros(qshape + (S,)), "Qr": np.zeros(qshape + (S, N)), "Z": np.zeros(qshape + (S, N))}
            K.run_alg1(net, R, state.Q, state.Qr, state.Z, alpha, p.H, p.kappa, p.A_max, p.u_floor,
                       out["cand"], out["objective"], out["admitted"], out["mu"], out["f"], out["utility"],
                       keep, rec["Q"], rec["Qr"], rec["Z"], acc_from, qsum["Q"], qsum["Qr"], qsum["Z"])
            encoded = None
        else:
            rec = {"Qp": np.zeros(qshape + (S,)), "P": np.zeros(qshape + (S,)), "Zc": np.zeros(qshape + (S, N)),
                   "V": np.zeros(qshape + (S,)), "Qr": np.zeros(qshape + (S, N))}
            out["boundary"] = np.zeros((n, S), dtype=np.bool_)
            out["rate"] = np.zeros((n, S))
            msg = Messages(np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n, np.int64),
                           np.zeros(n, np.int64), np.zeros(n), np.zeros(n, np.bool_), np.zeros(n))
            msg_count[0] = 0
            K.run_alg2(net, R, t0, state.Qp, state.P, state.k, state.rate, state.Zc, state.V, state.Qr,
                       state.outage, state.start, state.padding,
                       p.H, p.kappa, p.A_max, p.u_floor, gamma, R_nom, msg_bits, v_weight, grid, p_grid,
                       out["cand"], out["objective"], out["admitted"], out["mu"], out["f"], out["utility"],
                       out["boundary"], out["rate"],
                       msg.source, msg.index, msg.start, msg.end, msg.rate, msg.outage, msg.padding, msg_count,
                       keep, rec["Qp"], rec["P"], rec["Zc"], rec["V"], rec["Qr"],
                       acc_from, qsum["Qp"], qsum["P"], qsum["V"], qsum["Qr"])
            m = int(msg_count[0])
            messages.append(Messages(*(getattr(msg, k)[:m].copy() for k in Messages.__dataclass_fields__)))
            w = slice(acc_from, n)
            encoded = (out["boundary"][w] * out["rate"][w]).sum(axis=0) * (msg_bits / R_nom)
        comm = np.where(out["cand"] >= 0, net.cand_comm[out["cand"]], K.IDLE)
        w = slice(acc_from, n)
        acc.add(tables, comm[w], out["mu"][w], out["f"][w], out["admitted"][w], out["utility"][w], encoded)
        if keep:
            out["commodity"] = comm
            out["set_id"] = np.where(out["cand"] >= 0, net.cand_set[out["cand"]], K.IDLE)
            out["queues"] = rec
            parts.append(out)
        t0 += n

    window = max(acc.n, 1)
    relays = net.intermediate.copy()
    queues = {k: v / window for k, v in qsum.items()}
    leakage = np.where(relays[None, :], acc.leak / window, 0.0)
    service = acc.service / window
    max_leak = leakage.max(axis=1, initial=0.0)
    secrecy = SecrecyReport(service, leakage, max_leak, service - max_leak, np.zeros(S))
    all_msgs = Messages.concat(messages) if config.algorithm == ALG2 else None
    admitted = acc.admitted / window
    encoded = None
    if config.algorithm == ALG1:
        confidential = alpha * admitted
    else:
        confidential = admitted
        encoded = acc.encoded / window
        done = Messages(*(getattr(all_msgs, k)[all_msgs.end >= warm] for k in Messages.__dataclass_fields__))
        frac = [outage_fraction(done, s) for s in range(S)]
        secrecy.outage_fraction = np.array([x for x, _ in frac])
        secrecy.n_messages = np.array([c for _, c in frac])
    secrecy.throughput = confidential
    metrics = Metrics(
        algorithm=config.algorithm,
        sources=topo.sources,
        nodes=topo.nodes,
        window=acc.n,
        utility=acc.utility / window,
        admitted=admitted,
        confidential=confidential,
        queues=queues,
        secrecy=secrecy,
        relays=relays,
        encoded=encoded,
    )
    trace = _assemble(config, tables, parts, all_msgs) if keep else None
    metrics.wall_clock = time.perf_counter() - started
    log.debug("run %s seed=%d T=%d took %.2fs", config.algorithm, config.seed, T, metrics.wall_clock)
    return metrics, trace


def _trace_frame(config: RunConfig, tables: LinkTables) -> dict:
    topo = config.topology
    kw = dict(
        algorithm=config.algorithm,
        node_names=topo.nodes,
        link_names=topo.links,
        source_names=topo.sources,
        link_src=tables.net.link_src,
        comm_src=tables.net.comm_src,
        intermediate=tables.net.intermediate,
    )
    if config.algorithm == ALG2:
        kw["msg_bits"] = np.asarray(config.params.msg_bits, dtype=float)
        kw["nominal_rate"] = np.asarray(config.params.nominal_rate, dtype=float)
    return kw


def _assemble(config: RunConfig, tables: LinkTables, parts: list[dict], messages) -> Trace:
    S, N, L = len(config.topology.sources), len(config.topology.nodes), len(config.topology.links)

    def cat(key, shape, dtype=float):
        if not parts:
            return np.zeros((0,) + shape, dtype=dtype)
        return np.concatenate([p[key] for p in parts])

    queues = {}
    if parts:
        for k in parts[0]["queues"]:
            queues[k] = np.concatenate([p["queues"][k] for p in parts])
    kw = _trace_frame(config, tables)
    kw.update(
        t=np.arange(sum(len(p["cand"]) for p in parts), dtype=np.int64),
        commodity=cat("commodity", (), np.int64),
        set_id=cat("set_id", (), np.int64),
        objective=cat("objective", ()),
        mu=cat("mu", (L,)),
        f=cat("f", (N,)),
        admitted=cat("admitted", (S,)),
        utility=cat("utility", (S,)),
        queues=queues,
    )
    if config.algorithm == ALG2:
        kw.update(rate=cat("rate", (S,)), boundary=cat("boundary", (S,), bool), messages=messages)
    return Trace(**kw)


def run_stepwise(config: RunConfig) -> Trace:
    """Reference run through the per-block Python controllers (slow)."""
    topo = config.topology
    tables = config.tables()
    S, N = len(topo.sources), len(topo.nodes)
    stream = ChannelStream(topo, config.channel, config.seed)
    if config.algorithm == ALG1:
        state, step = NetState1.zeros(S, N), step_1
    else:
        state, step = NetState2.zeros(S, N), step_2
    records = []
    for _ in range(config.horizon):
        state, rec = step(state, stream.next_block(), tables, config.params)
        records.append(rec)
    kw = _trace_frame(config, tables)
    kw.update(
        t=np.array([r.t for r in records], dtype=np.int64),
        commodity=np.array([r.commodity for r in records], dtype=np.int64),
        set_id=np.array([r.set_id for r in records], dtype=np.int64),
        objective=np.array([r.objective for r in records]),
        mu=np.array([r.mu for r in records]),
        f=np.array([r.f for r in records]),
        admitted=np.array([r.admitted for r in records]),
        utility=np.array([r.utility for r in records]),
        queues={k: np.array([r.queues[k] for r in records]) for k in records[0].queues},
    )
    if config.algorithm == ALG2:
        kw["rate"] = np.array([r.rate for r in records])
        kw["boundary"] = np.array([r.boundary for r in records])
        out = {(r.t, s) for r in records for s in np.flatnonzero(r.outage)}
        starts = {}
        msgs = []
        k = np.zeros(S, dtype=np.int64)
        for r in records:
            for s in np.flatnonzero(r.boundary):
                k[s] += 1
                starts[s] = (k[s], r.t, r.rate[s])
            for s in np.flatnonzero(r.completed):
                idx, t_start, rate = starts[s]
                msgs.append((s, idx, t_start, r.t, rate, (r.t, s) in out))
        cols = list(zip(*msgs)) if msgs else [[]] * 6
        kw["messages"] = Messages(
            np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=np.int64),
            np.array(cols[2], dtype=np.int64), np.array(cols[3], dtype=np.int64),
            np.array(cols[4], dtype=float), np.array(cols[5], dtype=bool), np.zeros(len(msgs)),
        )
    return Trace(**kw)


SWEEP_PARAMS = ("alpha", "H", "gamma", "msg_bits")


def with_param(config: RunConfig, name: str, value: float) -> RunConfig:
    """Copy of ``config`` with one parameter changed.

    ``name`` is ``H`` or one of ``alpha``, ``gamma``, ``msg_bits``, either
    bare (all sources) or with a 1-based source number (``alpha1``).
    """
    p = config.params
    if name == "H":
        return replace(config, params=replace(p, H=float(value)))
    base = name.rstrip("0123456789")
    if base not in SWEEP_PARAMS or base == "H":
        raise ValueError(f"unknown sweep parameter {name!r}; use one of {SWEEP_PARAMS}")
    if not hasattr(p, base):
        raise ValueError(f"parameter {base!r} does not apply to {config.algorithm}")
    values = list(getattr(p, base))
    idx = name[len(base):]
    if idx:
        s = int(idx) - 1
        if not 0 <= s < len(values):
            raise ValueError(f"{name}: no source number {idx}")
        values[s] = float(value)
    else:
        values = [float(value)] * len(values)
    return replace(config, params=replace(p, **{base: tuple(values)}))


@dataclass
class SweepResult:
    param: str
    values: list
    seeds: list
    mean: list = field(default_factory=list)  # one flat-metrics dict per value
    std: list = field(default_factory=list)
    runs: list = field(default_factory=list)  # per value, the Metrics of every seed

    def column(self, key: str) -> np.ndarray:
        return np.array([m[key] for m in self.mean])

    def rows(self) -> list[dict]:
        out = []
        for v, m, s in zip(self.values, self.mean, self.std):
            row = {self.param: v}
            row.update(m)
            row.update({f"std_{k}": x for k, x in s.items()})
            out.append(row)
        return out


def _run_metrics(config: RunConfig) -> Metrics:
    return run(config)[0]


def _aggregate(runs: list[Metrics]) -> tuple[dict, dict]:
    flats = [m.flat() for m in runs]
    mean, std = {}, {}
    for k, v in flats[0].items():
        if isinstance(v, str):
            mean[k] = v
            continue
        xs = np.array([f[k] for f in flats], dtype=float)
        mean[k] = float(xs.mean())
        std[k] = float(xs.std(ddof=1)) if len(xs) > 1 else 0.0
    return mean, std


def sweep(base: RunConfig, param: str, grid, seeds: int = 1, workers: int = 1) -> SweepResult:
    """Run every grid value with the same ``seeds`` seeds and average.

    Seeds are ``base.seed + j`` for ``j < seeds`` at every grid point, so
    differences between points are not blurred by different channel draws.
    Results are ordered by grid position whatever the worker count.
    """
    values = [float(v) for v in grid]
    if not values:
        raise ValueError("empty sweep grid")
    seed_list = [base.seed + j for j in range(seeds)]
    configs = [replace(with_param(base, param, v), seed=sd, record_trace=False) for v in values for sd in seed_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            metrics = list(pool.map(_run_metrics, configs))
    else:
        metrics = [_run_metrics(c) for c in configs]
    result = SweepResult(param, values, seed_list)
    for i in range(len(values)):
        runs = metrics[i * seeds:(i + 1) * seeds]
        mean, std = _aggregate(runs)
        result.mean.append(mean)
        result.std.append(std)
        result.runs.append(runs)
    return result


def find_optimal_alpha(base: RunConfig, grid, seeds: int = 1, workers: int = 1):
    """Coordinate-wise search for the utility-maximizing secrecy fractions.

    Sources are visited once, in order; each one's fraction is swept over
    ``grid`` with the others held at their current values.
    Returns ``(alphas, best_total_utility, sweeps)``.
    """
    if base.algorithm != ALG1:
        raise ValueError("secrecy fractions belong to the infinite-block controller")
    config = base
    best_u = -np.inf
    sweeps = []
    for s in range(len(base.params.alpha)):
        res = sweep(config, f"alpha{s + 1}", grid, seeds, workers)
        u = res.column("total_utility")
        i = int(np.argmax(u))
        best_u = float(u[i])
        config = with_param(config, f"alpha{s + 1}", res.values[i])
        sweeps.append(res)
    return tuple(config.params.alpha), best_u, sweeps
