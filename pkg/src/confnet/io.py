"""Trace CSV files and JSON run summaries."""

from __future__ import annotations

import csv
import json
import re
import warnings
from pathlib import Path

import numpy as np

from confnet.records import Messages, Trace

FMT = "%.9g"


def _columns(trace: Trace) -> list[tuple[str, np.ndarray]]:
    T = len(trace)
    src = trace.source_names
    relays = [j for j, x in enumerate(trace.intermediate) if x]
    cols = [
        ("t", trace.t),
        ("set", trace.set_id),
        ("commodity", trace.commodity),
        ("objective", trace.objective),
    ]
    cols += [(f"mu[{i}->{j}]", trace.mu[:, l]) for l, (i, j) in enumerate(trace.link_names)]
    cols += [(f"f[{trace.node_names[j]}]", trace.f[:, j]) for j in relays]
    cols += [(f"A[{s}]", trace.admitted[:, k]) for k, s in enumerate(src)]
    cols += [(f"U[{s}]", trace.utility[:, k]) for k, s in enumerate(src)]
    for name, arr in trace.queues.items():
        if arr.ndim == 2:
            cols += [(f"{name}[{s}]", arr[:, k]) for k, s in enumerate(src)]
        else:
            cols += [(f"{name}[{s}@{trace.node_names[j]}]", arr[:, k, j]) for k, s in enumerate(src) for j in relays]
    if trace.algorithm == "alg2":
        done = np.zeros((T, len(src)))
        out = np.zeros((T, len(src)))
        m = trace.messages
        if m is not None and len(m):
            pos = np.searchsorted(trace.t, m.end)
            ok = (pos < T) & (trace.t[np.minimum(pos, T - 1)] == m.end)
            done[pos[ok], m.source[ok]] = 1
            out[pos[ok], m.source[ok]] = m.outage[ok]
        for k, s in enumerate(src):
            cols += [
                (f"rate[{s}]", trace.rate[:, k]),
                (f"boundary[{s}]", trace.boundary[:, k].astype(int)),
                (f"done[{s}]", done[:, k]),
                (f"outage[{s}]", out[:, k]),
                (f"msg_bits[{s}]", np.full(T, trace.msg_bits[k])),
                (f"nominal_rate[{s}]", np.full(T, trace.nominal_rate[k])),
            ]
    return cols


def write_trace(trace: Trace, path) -> None:
    """One row per block, header first, values printed with 9 significant digits."""
    cols = _columns(trace)
    header = ",".join(name for name, _ in cols)
    data = np.column_stack([np.asarray(v, dtype=float) for _, v in cols]) if len(trace) else np.zeros((0, len(cols)))
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, data, fmt=FMT, delimiter=",")


_BRACKET = re.compile(r"^(\w+)\[(.+)\]$")


def read_trace(path) -> Trace:
    """Rebuild a trace written by :func:`write_trace`.

    Node order is sources, then relays, then the remaining link endpoints.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header or header[:3] != ["t", "set", "commodity"]:
        raise ValueError(f"{path}: not a trace file")
    with warnings.catch_warnings():
        # a header-only file is a valid empty trace
        warnings.simplefilter("ignore", UserWarning)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] and data.shape[1] != len(header):
        raise ValueError(f"{path}: {data.shape[1]} values per row but {len(header)} columns")
    col = {name: data[:, i] if data.shape[0] else np.zeros(0) for i, name in enumerate(header)}

    groups: dict[str, list[str]] = {}
    for name in header:
        m = _BRACKET.match(name)
        if m:
            groups.setdefault(m.group(1), []).append(m.group(2))
    links = [tuple(x.split("->", 1)) for x in groups.get("mu", [])]
    relays = groups.get("f", [])
    sources = groups.get("A", [])
    nodes = list(sources) + [r for r in relays if r not in sources]
    for i, j in links:
        for n in (i, j):
            if n not in nodes:
                nodes.append(n)
    N, S = len(nodes), len(sources)
    T = data.shape[0]
    f = np.zeros((T, N))
    for r in relays:
        f[:, nodes.index(r)] = col[f"f[{r}]"]

    def per_source(prefix):
        return np.column_stack([col[f"{prefix}[{s}]"] for s in sources]) if S else np.zeros((T, 0))

    queues = {}
    for name, keys in groups.items():
        if name in ("mu", "f", "A", "U", "rate", "boundary", "done", "outage", "msg_bits", "nominal_rate"):
            continue
        if all("@" not in k for k in keys):
            queues[name] = per_source(name)
        else:
            arr = np.zeros((T, S, N))
            for k in keys:
                s, j = k.split("@", 1)
                arr[:, sources.index(s), nodes.index(j)] = col[f"{name}[{k}]"]
            queues[name] = arr

    algorithm = "alg2" if "rate" in groups else "alg1"
    kw = dict(
        algorithm=algorithm,
        node_names=tuple(nodes),
        link_names=tuple(links),
        source_names=tuple(sources),
        link_src=np.array([nodes.index(i) for i, _ in links], dtype=np.int64),
        comm_src=np.arange(S, dtype=np.int64),
        intermediate=np.array([n in relays for n in nodes], dtype=bool),
        t=col["t"].astype(np.int64),
        commodity=col["commodity"].astype(np.int64),
        set_id=col["set"].astype(np.int64),
        objective=col["objective"],
        mu=np.column_stack([col[f"mu[{i}->{j}]"] for i, j in links]) if links else np.zeros((T, 0)),
        f=f,
        admitted=per_source("A"),
        utility=per_source("U"),
        queues=queues,
    )
    if algorithm == "alg2":
        rate = per_source("rate")
        boundary = per_source("boundary") > 0
        done = per_source("done") > 0
        outage = per_source("outage") > 0
        msgs = []
        for s in range(S):
            starts = np.flatnonzero(boundary[:, s])
            for idx, end in enumerate(np.flatnonzero(done[:, s])):
                # the message ending here is the last one started at or before it
                k = np.searchsorted(starts, end, side="right") - 1
                start = kw["t"][starts[k]] if k >= 0 else -1
                msgs.append((s, k + 1, start, kw["t"][end], rate[end, s], outage[end, s]))
        msgs.sort(key=lambda m: (m[3], m[0]))
        c = list(zip(*msgs)) if msgs else [[]] * 6
        kw.update(
            rate=rate,
            boundary=boundary,
            messages=Messages(np.array(c[0], np.int64), np.array(c[1], np.int64), np.array(c[2], np.int64),
                              np.array(c[3], np.int64), np.array(c[4], float), np.array(c[5], bool),
                              np.zeros(len(msgs))),
            msg_bits=per_source("msg_bits")[0] if T else np.ones(S),
            nominal_rate=per_source("nominal_rate")[0] if T else np.ones(S),
        )
    return Trace(**kw)


def write_summary(metrics, path, extra: dict | None = None) -> dict:
    """Flat JSON object of the run's metrics; returns what was written."""
    doc = dict(extra or {})
    doc.update(metrics.flat())
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
    return doc


def read_summary(path) -> dict:
    return json.loads(Path(path).read_text())


def write_rows(rows: list[dict], path) -> None:
    """CSV table with the union of keys as header, in first-seen order."""
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in keys])


def _fmt(v):
    if isinstance(v, float):
        return FMT % v
    return v
