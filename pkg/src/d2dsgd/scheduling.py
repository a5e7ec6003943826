"""Interference-free slot assignment for broadcast and AirComp transmission.

Digital (broadcast) scheduling colors the auxiliary graph that joins every
pair of nodes which are adjacent or share a common neighbor, so no receiver
ever hears two same-slot transmitters.  Analog scheduling repeatedly carves
non-interfering star sub-networks out of the residual graph: each selected
center receives one AirComp superposition slot from all its current
neighbors, then broadcasts back in the paired slot, and is removed.
"""

from __future__ import annotations

from dataclasses import dataclass

from .streams import substream
from .topology import Topology

__all__ = [
    "DigitalSchedule",
    "AnalogSchedule",
    "auxiliary_graph",
    "greedy_color",
    "digital_schedule",
    "tdma_schedule",
    "analog_schedule",
    "validate_digital",
    "validate_analog",
    "dump_schedule",
    "random_connected_topology",
]


def _adj_sets(topology):
    return [set(topology.neighbors(i)) for i in range(topology.node_count)]


def _aux_sets(adj):
    """Close adjacency under 'shares a common neighbor'."""
    aux = [set(s) for s in adj]
    for nbrs in adj:
        for i in nbrs:
            for j in nbrs:
                if i < j:
                    aux[i].add(j)
                    aux[j].add(i)
    return aux


def _greedy_color(adj, nodes=None):
    """First-fit coloring, nodes ordered by descending degree then index."""
    if nodes is None:
        nodes = range(len(adj))
    order = sorted(nodes, key=lambda i: (-len(adj[i]), i))
    color = {}
    for i in order:
        used = {color[j] for j in adj[i] if j in color}
        c = 0
        while c in used:
            c += 1
        color[i] = c
    return color


def auxiliary_graph(topology):
    """Topology augmented with an edge for every common-neighbor pair."""
    aux = _aux_sets(_adj_sets(topology))
    edges = {(i, j) for i in range(topology.node_count) for j in aux[i] if i < j}
    return Topology(topology.node_count, frozenset(edges), topology.positions)


def greedy_color(topology):
    """Proper coloring of the given graph; returns color per node."""
    color = _greedy_color(_adj_sets(topology))
    return [color[i] for i in range(topology.node_count)]


@dataclass(frozen=True)
class DigitalSchedule:
    """Each node broadcasts in exactly one of M slots."""

    slot_count: int
    slot_of: tuple

    @property
    def slots(self):
        out = [set() for _ in range(self.slot_count)]
        for i, s in enumerate(self.slot_of):
            out[s].add(i)
        return [frozenset(s) for s in out]


def digital_schedule(topology):
    """Coloring-based broadcast schedule on the auxiliary graph."""
    aux = _aux_sets(_adj_sets(topology))
    color = _greedy_color(aux)
    slot_of = tuple(color[i] for i in range(topology.node_count))
    sched = DigitalSchedule(max(slot_of) + 1, slot_of)
    validate_digital(sched, topology)
    return sched


def tdma_schedule(topology):
    """One device per slot, M = K."""
    K = topology.node_count
    return DigitalSchedule(K, tuple(range(K)))


def validate_digital(schedule, topology):
    K = topology.node_count
    if len(schedule.slot_of) != K:
        raise ValueError("schedule does not cover every node exactly once")
    aux = _aux_sets(_adj_sets(topology))
    max_deg = max(len(s) for s in aux)
    if schedule.slot_count > max_deg + 1:
        raise ValueError(
            f"slot count {schedule.slot_count} exceeds the greedy bound {max_deg + 1}")
    for s, txs in enumerate(schedule.slots):
        txs = sorted(txs)
        for a in range(len(txs)):
            for b in range(a + 1, len(txs)):
                if txs[b] in aux[txs[a]]:
                    raise ValueError(
                        f"slot {s}: nodes {txs[a]} and {txs[b]} conflict in the auxiliary graph")


@dataclass(frozen=True)
class AnalogSchedule:
    """Paired-slot star schedule: M = 2n slots, odd AirComp then even broadcast.

    ``stars[r]`` lists that pair's (center, leaves) stars; slots are 1-based,
    pair r using odd slot 2r+1 and even slot 2r+2.  Per-node slot sets mirror
    the stars: a leaf transmits AirComp in the odd slot and listens to the
    center's broadcast in the even slot.
    """

    slot_count: int
    stars: tuple
    at_slots: tuple
    ar_slots: tuple
    bt_slots: tuple
    br_slots: tuple

    def tx_slot_count(self, i):
        return len(self.at_slots[i]) + len(self.bt_slots[i])


def analog_schedule(topology):
    """Iteratively schedule maximal-degree star sub-networks on the residual graph.

    Each round colors the auxiliary graph of the residual graph (so scheduled
    stars never share leaves or interfere), picks the color class with the
    largest residual-degree sum (ties to the smaller color index) as centers,
    assigns the slot pair, and removes the centers.  A residual component
    that is a bare pair is served with the lower-index node transmitting in
    the odd slot and the higher-index node answering in the even slot.
    """
    K = topology.node_count
    remaining = _adj_sets(topology)
    alive = set(range(K))
    at = [set() for _ in range(K)]
    ar = [set() for _ in range(K)]
    bt = [set() for _ in range(K)]
    br = [set() for _ in range(K)]
    rounds = []

    while alive:
        aux = _aux_sets(remaining)
        color = _greedy_color(aux, alive)
        deg_sum = {}
        for i in alive:
            deg_sum[color[i]] = deg_sum.get(color[i], 0) + len(remaining[i])
        best = max(deg_sum.values())
        chosen = min(c for c, d in deg_sum.items() if d == best)
        centers = {i for i in alive if color[i] == chosen}

        # bare point-to-point component: lower index transmits first
        for i in sorted(centers):
            if len(remaining[i]) == 1:
                (j,) = remaining[i]
                if len(remaining[j]) == 1 and i < j:
                    centers.discard(i)
                    centers.add(j)

        r = len(rounds)
        odd, even = 2 * r + 1, 2 * r + 2
        stars = []
        for c in sorted(centers):
            leaves = frozenset(remaining[c])
            stars.append((c, leaves))
            ar[c].add(odd)
            bt[c].add(even)
            for j in leaves:
                at[j].add(odd)
                br[j].add(even)
        rounds.append(tuple(stars))

        for c in centers:
            for j in list(remaining[c]):
                remaining[j].discard(c)
            remaining[c].clear()
            alive.discard(c)
        alive = {i for i in alive if remaining[i]}

    sched = AnalogSchedule(
        slot_count=2 * len(rounds),
        stars=tuple(rounds),
        at_slots=tuple(frozenset(s) for s in at),
        ar_slots=tuple(frozenset(s) for s in ar),
        bt_slots=tuple(frozenset(s) for s in bt),
        br_slots=tuple(frozenset(s) for s in br),
    )
    validate_analog(sched, topology)
    return sched


def validate_analog(schedule, topology):
    K = topology.node_count
    directed = {}
    for r, stars in enumerate(schedule.stars):
        odd, even = 2 * r + 1, 2 * r + 2
        leaves_seen = set()
        centers_seen = {c for c, _ in stars}
        for c, leaves in stars:
            if not leaves:
                raise ValueError(f"pair {r}: center {c} has no leaves")
            for j in leaves:
                if j in centers_seen:
                    raise ValueError(f"pair {r}: node {j} is both center and leaf")
                if (j, c) not in topology.edges and (c, j) not in topology.edges:
                    raise ValueError(f"pair {r}: ({j},{c}) is not an edge")
                if j in leaves_seen:
                    raise ValueError(f"pair {r}: node {j} serves two stars at once")
                leaves_seen.add(j)
                directed[(j, c)] = directed.get((j, c), 0) + 1  # AirComp leg
                directed[(c, j)] = directed.get((c, j), 0) + 1  # broadcast leg
            if odd not in schedule.ar_slots[c] or even not in schedule.bt_slots[c]:
                raise ValueError(f"pair {r}: center {c} slot sets inconsistent")
    for i, j in topology.edges:
        if directed.get((i, j), 0) != 1 or directed.get((j, i), 0) != 1:
            raise ValueError(f"edge ({i},{j}) not served exactly once per direction")
    if len(directed) != 2 * topology.edge_count:
        raise ValueError("schedule serves a non-edge")
    for i in range(K):
        if len(schedule.ar_slots[i]) > 1:
            raise ValueError(f"node {i} is a receiving center in more than one slot")
        if schedule.at_slots[i] & schedule.bt_slots[i]:
            raise ValueError(f"node {i} has overlapping AT/BT slots")
        if schedule.ar_slots[i] & schedule.br_slots[i]:
            raise ValueError(f"node {i} has overlapping AR/BR slots")
        for s in schedule.at_slots[i] | schedule.ar_slots[i]:
            if s % 2 == 0:
                raise ValueError(f"node {i}: AirComp slot {s} is not odd")
        for s in schedule.bt_slots[i] | schedule.br_slots[i]:
            if s % 2 == 1:
                raise ValueError(f"node {i}: broadcast slot {s} is not even")


def dump_schedule(schedule, topology=None):
    """One line per slot: `slot k: TX={...} mode=BC|AC center=j`."""
    lines = []
    if isinstance(schedule, DigitalSchedule):
        for s, txs in enumerate(schedule.slots):
            txset = ",".join(str(i) for i in sorted(txs))
            lines.append(f"slot {s + 1}: TX={{{txset}}} mode=BC center=-")
        return "\n".join(lines) + "\n"
    for r, stars in enumerate(schedule.stars):
        odd, even = 2 * r + 1, 2 * r + 2
        txs = sorted(j for _, leaves in stars for j in leaves)
        centers = ",".join(str(c) for c, _ in stars)
        lines.append(f"slot {odd}: TX={{{','.join(map(str, txs))}}} mode=AC center={centers}")
        lines.append(f"slot {even}: TX={{{centers}}} mode=BC center={centers}")
    return "\n".join(lines) + "\n"


def random_connected_topology(K, seed, extra_edges=0.3):
    """Random recursive tree plus a seeded fraction of extra edges; always connected."""
    rng = substream(seed, "graphgen")
    edges = {(int(rng.integers(0, i)), i) for i in range(1, K)}
    non_edges = [(i, j) for i in range(K) for j in range(i + 1, K) if (i, j) not in edges]
    if non_edges:
        extra = rng.random(len(non_edges)) < extra_edges
        edges |= {e for e, keep in zip(non_edges, extra) if keep}
    return Topology(K, frozenset(edges))
