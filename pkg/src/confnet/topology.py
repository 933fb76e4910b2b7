"""Network graph, node roles and concurrently-active link sets."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from confnet._kernels import Net

SOURCE = "source"
RELAY = "relay"
DESTINATION = "destination"
ROLES = (SOURCE, RELAY, DESTINATION)

NODE_EXCLUSIVE = "node-exclusive"
ALL_LINKS = "all-links-concurrent"
INTERFERENCE_MODELS = (NODE_EXCLUSIVE, ALL_LINKS)

Link = tuple[str, str]


class TopologyError(ValueError):
    """Raised when a network description violates a structural rule."""


@dataclass(frozen=True)
class Topology:
    nodes: tuple[str, ...]
    roles: Mapping[str, str]
    links: tuple[Link, ...]
    pairing: Mapping[str, str]  # source -> destination, declaration order

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(self.pairing)

    @property
    def destinations(self) -> tuple[str, ...]:
        return tuple(self.pairing.values())

    @property
    def relays(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if self.roles[n] == RELAY)

    def is_intermediate(self, node: str) -> bool:
        return self.roles[node] == RELAY

    def node_index(self, node: str) -> int:
        return self.nodes.index(node)

    def link_index(self, link: Link) -> int:
        return self.links.index(tuple(link))

    def out_links(self, node: str) -> list[Link]:
        return [l for l in self.links if l[0] == node]

    def in_links(self, node: str) -> list[Link]:
        return [l for l in self.links if l[1] == node]

    def to_raw(self) -> dict:
        return {
            "nodes": [{"id": n, "role": self.roles[n]} for n in self.nodes],
            "links": [list(l) for l in self.links],
            "pairing": dict(self.pairing),
        }


@dataclass(frozen=True)
class ActiveSet:
    id: int
    links: tuple[Link, ...]

    def nodes(self) -> set[str]:
        return {n for l in self.links for n in l}


def validate_topology(raw: Mapping) -> Topology:
    """Build a :class:`Topology` from a parsed description.

    ``raw`` holds ``nodes`` (a list of ``{"id", "role"}`` mappings), ``links``
    (a list of ``(from, to)`` pairs) and ``pairing`` (source id -> destination
    id). Sources and destinations that are not paired are rejected.
    """
    nodes: list[str] = []
    roles: dict[str, str] = {}
    for entry in raw.get("nodes", ()):
        nid, role = str(entry["id"]), str(entry["role"])
        if nid in roles:
            raise TopologyError(f"duplicate node {nid!r}")
        if role not in ROLES:
            raise TopologyError(f"node {nid!r}: unknown role {role!r}")
        nodes.append(nid)
        roles[nid] = role
    if not nodes:
        raise TopologyError("topology has no nodes")

    links: list[Link] = []
    for pair in raw.get("links", ()):
        if len(pair) != 2:
            raise TopologyError(f"link {pair!r} is not a (from, to) pair")
        i, j = str(pair[0]), str(pair[1])
        for n in (i, j):
            if n not in roles:
                raise TopologyError(f"link ({i}, {j}) references unknown node {n!r}")
        if i == j:
            raise TopologyError(f"self-loop on node {i!r}")
        if (i, j) in links:
            raise TopologyError(f"duplicate link ({i}, {j})")
        if roles[i] == SOURCE and roles[j] == DESTINATION:
            raise TopologyError(f"direct source-destination link ({i}, {j})")
        if roles[j] == SOURCE:
            raise TopologyError(f"link ({i}, {j}) enters a source node")
        if roles[i] == DESTINATION:
            raise TopologyError(f"link ({i}, {j}) leaves a destination node")
        links.append((i, j))

    pairing: dict[str, str] = {}
    for s, d in dict(raw.get("pairing", {})).items():
        s, d = str(s), str(d)
        if roles.get(s) != SOURCE:
            raise TopologyError(f"commodity source {s!r} is not a source node")
        if roles.get(d) != DESTINATION:
            raise TopologyError(f"commodity destination {d!r} is not a destination node")
        if d in pairing.values():
            raise TopologyError(f"destination {d!r} paired with more than one source")
        pairing[s] = d
    for n in nodes:
        if roles[n] == SOURCE and n not in pairing:
            raise TopologyError(f"source {n!r} has no destination")
        if roles[n] == DESTINATION and n not in pairing.values():
            raise TopologyError(f"destination {n!r} has no source")
    if not pairing:
        raise TopologyError("topology has no commodities")
    for s, d in pairing.items():
        if not any(l[0] == s for l in links):
            raise TopologyError(f"source {s!r} has no outgoing link")
        if not any(l[1] == d for l in links):
            raise TopologyError(f"destination {d!r} has no incoming link")

    return Topology(tuple(nodes), roles, tuple(links), pairing)


def _is_matching(links: Iterable[Link]) -> bool:
    seen: set[str] = set()
    for i, j in links:
        if i in seen or j in seen:
            return False
        seen.update((i, j))
    return True


def _maximal_matchings(links: Sequence[Link]) -> list[tuple[int, ...]]:
    n = len(links)
    out: list[tuple[int, ...]] = []

    def extend(k: int, chosen: list[int], used: set[str]) -> None:
        if k == n:
            for idx, (i, j) in enumerate(links):
                if idx not in chosen and i not in used and j not in used:
                    return
            out.append(tuple(chosen))
            return
        i, j = links[k]
        if i not in used and j not in used:
            chosen.append(k)
            extend(k + 1, chosen, used | {i, j})
            chosen.pop()
        extend(k + 1, chosen, used)

    extend(0, [], set())
    return out


def enumerate_active_sets(topology: Topology, interference_model: str = NODE_EXCLUSIVE) -> list[ActiveSet]:
    """Return the schedulable link sets, ordered by member link indices.

    Under the node-exclusive model these are the maximal matchings of the
    link graph; a scheduler may still switch off single links of a set, so
    non-maximal matchings are never needed. Under the wired model every link
    may be active at once and the single set is the whole link list.
    """
    if interference_model == ALL_LINKS:
        return [ActiveSet(0, tuple(topology.links))]
    if interference_model != NODE_EXCLUSIVE:
        raise ValueError(f"unknown interference model {interference_model!r}")
    index_sets = sorted(_maximal_matchings(topology.links))
    return [ActiveSet(k, tuple(topology.links[i] for i in idx)) for k, idx in enumerate(index_sets)]


def overhearing_neighbors(topology: Topology, transmitter: str, active_set: Iterable[Link]) -> list[str]:
    """Intermediate nodes that overhear ``transmitter`` while ``active_set`` is on.

    A node overhears when it has a link from the transmitter and is neither
    sending nor receiving in the set. Sources and destinations are never
    reported.
    """
    busy = {n for l in active_set for n in l}
    return [
        k
        for (i, k) in topology.links
        if i == transmitter and k not in busy and topology.is_intermediate(k)
    ]


@dataclass(frozen=True)
class Candidate:
    """One scheduling choice: a commodity and the links it activates."""

    commodity: int
    set_id: int
    mask: int  # bit b set when the set's b-th link is on
    links: tuple[int, ...]


@dataclass(frozen=True)
class LinkTables:
    """Integer-indexed view of a topology used by the compiled control loops."""

    n_nodes: int
    eligible: np.ndarray  # (S, L) bool: link may carry the commodity
    overhearing: bool
    net: Net = field(repr=False)
    sets: tuple[ActiveSet, ...] = field(repr=False, default=())
    candidates: tuple[Candidate, ...] = field(repr=False, default=())

    @property
    def n_links(self) -> int:
        return len(self.net.link_src)

    @property
    def n_commodities(self) -> int:
        return len(self.net.comm_src)


MAX_SET_SIZE = 16


def leak_pattern(topology: Topology, links: Sequence[int], overhearing: bool = True):
    """Static leakage structure of a group of simultaneously active links.

    Returns ``(receptions, groups)``: ``receptions`` lists ``(node, link)``
    for every active link ending at an intermediate node, ``groups`` lists
    ``(node, links)`` for every idle intermediate node and the active-
    transmitter links it can hear. Node and link values are indices.
    """
    nodes = topology.nodes
    active = [topology.links[l] for l in links]
    receptions = [
        (nodes.index(j), l) for l, (_, j) in zip(links, active) if topology.is_intermediate(j)
    ]
    groups = []
    if overhearing:
        heard: dict[str, list[int]] = {}
        for i in dict.fromkeys(i for i, _ in active):
            for k in overhearing_neighbors(topology, i, active):
                heard.setdefault(k, []).append(topology.link_index((i, k)))
        for k in nodes:
            if k in heard:
                groups.append((nodes.index(k), tuple(heard[k])))
    return receptions, groups


def link_tables(topology: Topology, active_sets: Sequence[ActiveSet], overhearing: bool = True) -> LinkTables:
    """Precompute every distinct (commodity, activated links) scheduling choice.

    Choices are listed by commodity, then set id, then bitmask over the set's
    links; a choice whose link group already appeared earlier is dropped, so
    the first listed copy wins ties.
    """
    nodes = topology.nodes
    link_src = np.array([nodes.index(i) for i, _ in topology.links], dtype=np.int64)
    link_dst = np.array([nodes.index(j) for _, j in topology.links], dtype=np.int64)
    intermediate = np.array([topology.is_intermediate(n) for n in nodes], dtype=np.bool_)
    comm_src = np.array([nodes.index(s) for s in topology.sources], dtype=np.int64)
    comm_dst = np.array([nodes.index(d) for d in topology.destinations], dtype=np.int64)

    S, L = len(comm_src), len(link_src)
    eligible = np.zeros((S, L), dtype=np.bool_)
    for c, (s, d) in enumerate(topology.pairing.items()):
        for l, (i, j) in enumerate(topology.links):
            # a commodity never leaves a foreign source nor enters a foreign destination
            if topology.roles[i] == SOURCE and i != s:
                continue
            if topology.roles[j] == DESTINATION and j != d:
                continue
            eligible[c, l] = True

    width = max((len(e.links) for e in active_sets), default=0)
    if width > MAX_SET_SIZE:
        raise ValueError(f"active set with {width} links exceeds the enumeration limit {MAX_SET_SIZE}")

    cands: list[Candidate] = []
    for c in range(S):
        seen: set[tuple[int, ...]] = set()
        for e in active_sets:
            idx = [topology.link_index(l) for l in e.links]
            for mask in range(1, 1 << len(idx)):
                on = tuple(sorted(idx[b] for b in range(len(idx)) if mask >> b & 1))
                if not all(eligible[c, l] for l in on) or on in seen:
                    continue
                seen.add(on)
                cands.append(Candidate(c, e.id, mask, on))

    lptr, lk = [0], []
    rptr, rnode, rlink = [0], [], []
    gptr, gnode, glptr, glinks = [0], [], [0], []
    for cand in cands:
        lk.extend(cand.links)
        lptr.append(len(lk))
        receptions, groups = leak_pattern(topology, cand.links, overhearing)
        for n, l in receptions:
            rnode.append(n)
            rlink.append(l)
        rptr.append(len(rnode))
        for n, ls in groups:
            gnode.append(n)
            glinks.extend(ls)
            glptr.append(len(glinks))
        gptr.append(len(gnode))

    def ints(x):
        return np.asarray(x, dtype=np.int64)

    net = Net(
        link_src=link_src,
        link_dst=link_dst,
        intermediate=intermediate,
        comm_src=comm_src,
        comm_dst=comm_dst,
        cand_comm=ints([c.commodity for c in cands]),
        cand_set=ints([c.set_id for c in cands]),
        cand_mask=ints([c.mask for c in cands]),
        cand_lptr=ints(lptr),
        cand_links=ints(lk),
        cand_rptr=ints(rptr),
        recv_node=ints(rnode),
        recv_link=ints(rlink),
        cand_gptr=ints(gptr),
        group_node=ints(gnode),
        group_lptr=ints(glptr),
        group_links=ints(glinks),
    )
    return LinkTables(
        n_nodes=len(nodes),
        eligible=eligible,
        overhearing=overhearing,
        net=net,
        sets=tuple(active_sets),
        candidates=tuple(cands),
    )


def diamond_single() -> Topology:
    """Single source, two relays, one destination."""
    return validate_topology(
        {
            "nodes": [
                {"id": "s", "role": SOURCE},
                {"id": "r1", "role": RELAY},
                {"id": "r2", "role": RELAY},
                {"id": "d", "role": DESTINATION},
            ],
            "links": [("s", "r1"), ("s", "r2"), ("r1", "d"), ("r2", "d")],
            "pairing": {"s": "d"},
        }
    )


SHARED_LINKS: tuple[Link, ...] = (
    ("s1", "1"),
    ("s1", "2"),
    ("s2", "2"),
    ("s2", "3"),
    ("1", "d1"),
    ("2", "d1"),
    ("2", "d2"),
    ("3", "d2"),
)


def diamond_shared() -> Topology:
    """Two commodities sharing relay 2; seven nodes, eight links."""
    return validate_topology(
        {
            "nodes": [
                {"id": "s1", "role": SOURCE},
                {"id": "s2", "role": SOURCE},
                {"id": "1", "role": RELAY},
                {"id": "2", "role": RELAY},
                {"id": "3", "role": RELAY},
                {"id": "d1", "role": DESTINATION},
                {"id": "d2", "role": DESTINATION},
            ],
            "links": SHARED_LINKS,
            "pairing": {"s1": "d1", "s2": "d2"},
        }
    )
