"""Slow, independent reference computations used by the tests."""

from functools import lru_cache
from itertools import product

import numpy as np

from confnet.topology import DESTINATION, SOURCE


def all_matchings(links):
    """Every subset of links with pairwise disjoint endpoints, by brute force."""
    out = []
    for mask in range(1 << len(links)):
        chosen = [links[i] for i in range(len(links)) if mask >> i & 1]
        ends = [n for l in chosen for n in l]
        if len(ends) == len(set(ends)):
            out.append(frozenset(chosen))
    return out


def maximal_matchings(links):
    return set(_maximal(tuple(links)))


@lru_cache(maxsize=None)
def _maximal(links):
    ms = all_matchings(list(links))
    return tuple(m for m in ms if not any(m < other for other in ms))


def leakage(topology, active, rates, overhearing=True):
    """Per-node information gathered while ``active`` links transmit."""
    f = {n: 0.0 for n in topology.nodes}
    busy = {n for l in active for n in l}
    for l in active:
        if topology.roles[l[1]] not in (SOURCE, DESTINATION):
            f[l[1]] += rates[l]
    if overhearing:
        for k in topology.nodes:
            if k in busy or topology.roles[k] in (SOURCE, DESTINATION):
                continue
            heard = [rates[(i, kk)] for (i, kk) in topology.links if kk == k and i in {a for a, _ in active}]
            if heard:
                f[k] += max(heard)
    return f


def allowed(topology, s, link):
    src, dst = s, topology.pairing[s]
    i, j = link
    if topology.roles[i] == SOURCE and i != src:
        return False
    if topology.roles[j] == DESTINATION and j != dst:
        return False
    return True


def brute_schedule(topology, backlog, Z, zsign, rates, overhearing=True):
    """Best (value, commodity index, frozenset of links) over every maximal set and on/off pattern.

    ``backlog[s][node]`` and ``Z[s][node]`` are dicts; ``rates`` maps links.
    Returns (0.0, None, frozenset()) when nothing is strictly positive.
    """
    best = (0.0, None, frozenset())
    for c, s in enumerate(topology.sources):
        for e in sorted(maximal_matchings(list(topology.links)), key=sorted):
            e = sorted(e)
            for on in product((0, 1), repeat=len(e)):
                act = [l for l, b in zip(e, on) if b]
                if not act or not all(allowed(topology, s, l) for l in act):
                    continue
                val = sum((backlog[s][i] - backlog[s][j]) * rates[(i, j)] for i, j in act)
                f = leakage(topology, act, rates, overhearing)
                val += zsign * sum(Z[s][k] * f[k] for k in topology.nodes)
                if val > best[0] + 1e-12 * max(1.0, abs(val)):
                    best = (val, c, frozenset(act))
    return best


def grid_argmax(fun, lo, hi, step):
    xs = np.arange(lo, hi + step / 2, step)
    vals = fun(xs)
    return xs[int(np.argmax(vals))]


def random_matching_graph(rng, n_links):
    """Random small directed graph as a list of distinct (i, j) pairs over nodes 0..7."""
    pairs = [(i, j) for i in range(8) for j in range(8) if i != j]
    idx = rng.choice(len(pairs), size=n_links, replace=False)
    return [(str(pairs[k][0]), str(pairs[k][1])) for k in idx]



def schedule_trace(topology, schedule, rates=None, algorithm="alg1"):
    """Trace of a fixed link-set schedule for commodity 0, every link at its rate.

    ``schedule`` is a list of link lists, one per block.
    """
    from confnet.records import Trace

    rates = rates or {l: 1.0 for l in topology.links}
    nodes = list(topology.nodes)
    idx = {l: k for k, l in enumerate(topology.links)}
    T, L, N = len(schedule), len(topology.links), len(nodes)
    mu, f = np.zeros((T, L)), np.zeros((T, N))
    for t, links in enumerate(schedule):
        for l in links:
            mu[t, idx[l]] = rates[l]
        leak = leakage(topology, links, rates)
        f[t] = [leak[n] for n in nodes]
    S = len(topology.sources)
    return Trace(
        algorithm=algorithm,
        node_names=tuple(nodes),
        link_names=tuple(topology.links),
        source_names=tuple(topology.sources),
        link_src=np.array([nodes.index(i) for i, _ in topology.links]),
        comm_src=np.array([nodes.index(s) for s in topology.sources]),
        intermediate=np.array([topology.roles[n] == "relay" for n in nodes]),
        t=np.arange(T),
        commodity=np.array([0 if links else -1 for links in schedule]),
        set_id=np.zeros(T, dtype=np.int64),
        objective=np.zeros(T),
        mu=mu,
        f=f,
        admitted=np.zeros((T, S)),
        utility=np.zeros((T, S)),
    )
