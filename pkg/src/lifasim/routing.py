"""Spike routing on a 2-D many-core mesh.

Cores are addressed ``(row, col)``.  On a fault-free mesh packets follow
dimension-ordered XY routes (columns first, then rows).  Once any node or
link is faulty every route comes from a breadth-first search restricted to
healthy elements.  Multicast and broadcast build a tree from the same route
family, so shared prefixes are traversed once.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, RoutingError

Node = tuple[int, int]
Link = tuple[Node, Node]

# fixed neighbour order keeps BFS trees reproducible
_STEPS = ((0, 1), (0, -1), (1, 0), (-1, 0))


class RouteMode(str, enum.Enum):
    UNICAST = "unicast"
    MULTICAST = "multicast"
    BROADCAST = "broadcast"


@dataclass(frozen=True)
class Mesh:
    width: int
    height: int
    faulty_nodes: frozenset = frozenset()
    faulty_links: frozenset = frozenset()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ContractError("mesh dimensions must be positive")
        object.__setattr__(self, "faulty_nodes", frozenset(tuple(n) for n in self.faulty_nodes))
        object.__setattr__(self, "faulty_links", frozenset((tuple(a), tuple(b)) for a, b in self.faulty_links))
        for n in self.faulty_nodes:
            if not self.contains(n):
                raise ContractError(f"faulty node {n} outside the mesh")
        for a, b in self.faulty_links:
            if not (self.contains(a) and self.contains(b)) or abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ContractError(f"faulty link {a}->{b} is not a mesh link")

    def contains(self, node: Node) -> bool:
        r, c = node
        return 0 <= r < self.height and 0 <= c < self.width

    @property
    def nodes(self) -> list[Node]:
        return [(r, c) for r in range(self.height) for c in range(self.width)]

    @property
    def is_fault_free(self) -> bool:
        return not self.faulty_nodes and not self.faulty_links

    def healthy(self, node: Node) -> bool:
        return node not in self.faulty_nodes

    def healthy_nodes(self) -> list[Node]:
        return [n for n in self.nodes if self.healthy(n)]

    def link_ok(self, a: Node, b: Node) -> bool:
        return self.healthy(a) and self.healthy(b) and (a, b) not in self.faulty_links

    def neighbors(self, node: Node) -> list[Node]:
        out = []
        for dr, dc in _STEPS:
            nb = (node[0] + dr, node[1] + dc)
            if self.contains(nb) and self.link_ok(node, nb):
                out.append(nb)
        return out

    def with_faults(self, nodes: Iterable[Node] = (), links: Iterable[Link] = ()) -> "Mesh":
        return Mesh(self.width, self.height, self.faulty_nodes | set(nodes), self.faulty_links | set(links))


def manhattan(a: Node, b: Node) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def xy_path(source: Node, dest: Node) -> list[Node]:
    path = [source]
    r, c = source
    step = 1 if dest[1] > c else -1
    while c != dest[1]:
        c += step
        path.append((r, c))
    step = 1 if dest[0] > r else -1
    while r != dest[0]:
        r += step
        path.append((r, c))
    return path


def bfs_parents(mesh: Mesh, source: Node) -> dict[Node, Node | None]:
    parents: dict[Node, Node | None] = {source: None}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nb in mesh.neighbors(node):
            if nb not in parents:
                parents[nb] = node
                queue.append(nb)
    return parents


def _unwind(parents: dict[Node, Node | None], dest: Node) -> list[Node]:
    path = [dest]
    while parents[path[-1]] is not None:
        path.append(parents[path[-1]])
    return path[::-1]


@dataclass(frozen=True)
class RoutePlan:
    mode: RouteMode
    source: Node
    destinations: tuple[Node, ...]
    paths: dict  # destination -> node list from source
    edges: tuple[Link, ...]  # every hop taken; repeated for unicast
    unreachable: tuple[Node, ...]

    @property
    def delivered(self) -> float:
        if not self.destinations:
            return 1.0
        return 1.0 - len(self.unreachable) / len(self.destinations)

    @property
    def total_hops(self) -> int:
        return len(self.edges)

    @property
    def max_latency(self) -> int:
        return max((len(p) - 1 for p in self.paths.values()), default=0)

    @property
    def nodes(self) -> set[Node]:
        out = {self.source}
        for a, b in self.edges:
            out.update((a, b))
        return out


def route(mesh: Mesh, mode: RouteMode | str, source: Node, destinations: Sequence[Node] | None = None) -> RoutePlan:
    """Route one packet from ``source``.

    Broadcast targets every other core of the mesh, so faulty cores count
    as undelivered.  Unreachable destinations are recorded, not raised.
    """
    mode = RouteMode(mode)
    source = tuple(source)
    if not mesh.contains(source):
        raise RoutingError(f"source {source} outside the mesh")
    if not mesh.healthy(source):
        raise RoutingError(f"source {source} is faulty")
    if mode is RouteMode.BROADCAST:
        dests = tuple(n for n in mesh.nodes if n != source)
    else:
        if not destinations:
            raise RoutingError("destinations must be non-empty")
        dests = tuple(dict.fromkeys(tuple(d) for d in destinations))
        for d in dests:
            if not mesh.contains(d):
                raise RoutingError(f"destination {d} outside the mesh")

    paths: dict[Node, list[Node]] = {}
    unreachable = []
    parents = None if mesh.is_fault_free else bfs_parents(mesh, source)
    for d in dests:
        if parents is None:
            paths[d] = xy_path(source, d)
        elif d in parents:
            paths[d] = _unwind(parents, d)
        else:
            unreachable.append(d)

    if mode is RouteMode.UNICAST:
        edges = [(p[i], p[i + 1]) for d in dests if d in paths for p in [paths[d]] for i in range(len(p) - 1)]
    else:
        seen: dict[Link, None] = {}
        for d in dests:
            if d in paths:
                p = paths[d]
                for i in range(len(p) - 1):
                    seen.setdefault((p[i], p[i + 1]), None)
        edges = list(seen)
    return RoutePlan(mode, source, dests, paths, tuple(edges), tuple(unreachable))


@dataclass(frozen=True)
class RoutingMetrics:
    mode: RouteMode
    delivered: float
    total_hops: int
    max_latency: int


def traffic_metrics(mesh: Mesh, mode: RouteMode | str, traffic) -> RoutingMetrics:
    """Aggregate one mode over a traffic list of ``(source, destinations)``.

    Flows whose source core is faulty deliver nothing.
    """
    mode = RouteMode(mode)
    delivered = wanted = hops = 0
    latency = 0
    for source, dests in traffic:
        source = tuple(source)
        n_dest = (mesh.width * mesh.height - 1) if mode is RouteMode.BROADCAST else len(set(map(tuple, dests)))
        wanted += n_dest
        if not mesh.healthy(source):
            continue
        plan = route(mesh, mode, source, dests)
        delivered += n_dest - len(plan.unreachable)
        hops += plan.total_hops
        latency = max(latency, plan.max_latency)
    frac = delivered / wanted if wanted else 1.0
    return RoutingMetrics(mode, frac, hops, latency)


def sample_node_faults(mesh: Mesh, fraction: float, seed: int) -> Mesh:
    """Fault the first ``round(fraction * cores)`` cores of a seeded permutation.

    Fault sets for one seed are nested across fractions, so delivery can
    only drop as the fraction grows.
    """
    if not 0 <= fraction < 1:
        raise ContractError("fault_fraction must lie in [0, 1)")
    nodes = mesh.nodes
    order = np.random.default_rng(seed).permutation(len(nodes))
    k = int(round(fraction * len(nodes)))
    return mesh.with_faults(nodes=[nodes[i] for i in order[:k]])


@dataclass
class RoutingTable:
    rows: list[tuple[str, float, int, float, int, int]] = field(default_factory=list)
    # (mode, fault_fraction, seed, delivered, total_hops, max_latency)

    def mean(self, mode: RouteMode | str, fraction: float) -> tuple[float, float, float]:
        mode = RouteMode(mode).value
        sel = [r for r in self.rows if r[0] == mode and r[1] == fraction]
        if not sel:
            raise ContractError(f"no rows for {mode} at {fraction}")
        a = np.array([r[3:] for r in sel], dtype=float)
        return tuple(float(v) for v in a.mean(axis=0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "fault_fraction", "seed", "delivered", "total_hops", "max_latency"])
        for mode, frac, seed, dl, hops, lat in self.rows:
            w.writerow([mode, f"{frac:g}", seed, f"{dl:.6f}", hops, lat])
        return buf.getvalue()


def evaluate_modes(
    mesh: Mesh,
    traffic,
    fault_fraction: float,
    seeds: Sequence[int],
    modes: Sequence[RouteMode | str] = tuple(RouteMode),
) -> RoutingTable:
    """Per-mode metrics for fixed traffic under seeded node faults."""
    table = RoutingTable()
    for seed in seeds:
        faulted = sample_node_faults(mesh, fault_fraction, seed)
        for mode in modes:
            m = traffic_metrics(faulted, mode, traffic)
            table.rows.append((m.mode.value, float(fault_fraction), int(seed), m.delivered, m.total_hops, m.max_latency))
    return table


def random_traffic(mesh: Mesh, n_flows: int, fanout: int, seed: int) -> list[tuple[Node, list[Node]]]:
    rng = np.random.default_rng(seed)
    nodes = mesh.nodes
    flows = []
    for _ in range(n_flows):
        src = int(rng.integers(len(nodes)))
        others = [i for i in range(len(nodes)) if i != src]
        picks = rng.choice(others, size=min(fanout, len(others)), replace=False)
        flows.append((nodes[src], [nodes[int(i)] for i in np.sort(picks)]))
    return flows


def map_clusters_to_cores(n_clusters, mesh: Mesh) -> dict[int, Node]:
    """One cluster per healthy core, row-major."""
    k = n_clusters if isinstance(n_clusters, int) else n_clusters.clusters.k
    healthy = mesh.healthy_nodes()
    if k > len(healthy):
        raise RoutingError(f"{k} clusters need more than the {len(healthy)} healthy cores")
    return {c: healthy[c] for c in range(k)}


def cluster_traffic(spec, mapping: dict[int, Node]) -> list[tuple[Node, list[Node]]]:
    """Traffic demands implied by inter-cluster synapses.

    Every cluster that sends at least one synapse to another cluster becomes
    a source whose destinations are the cores of the receiving clusters.
    """
    cluster_of = spec.clusters.cluster_of
    offsets = spec.topology.offsets
    k = spec.clusters.k
    links = np.zeros((k, k), dtype=bool)
    for i, lc in enumerate(spec.layers):
        pre = offsets[i] + lc.rows()
        post = offsets[i + 1] + lc.indices
        links[cluster_of[pre], cluster_of[post]] = True
    np.fill_diagonal(links, False)
    flows = []
    for c in range(k):
        dests = [mapping[int(d)] for d in np.flatnonzero(links[c])]
        if dests:
            flows.append((mapping[c], dests))
    return flows


def cluster_bench(
    spec,
    width: int,
    height: int,
    fault_fractions: Sequence[float],
    seeds: Sequence[int],
) -> RoutingTable:
    """Route a network's inter-cluster traffic on a faulted mesh.

    Faults are sampled first and clusters are then placed on the surviving
    cores, as a mapper would do on a chip with known bad cores.
    """
    table = RoutingTable()
    base = Mesh(width, height)
    for frac in fault_fractions:
        for seed in seeds:
            mesh = sample_node_faults(base, frac, seed)
            traffic = cluster_traffic(spec, map_clusters_to_cores(spec.clusters.k, mesh))
            for mode in RouteMode:
                m = traffic_metrics(mesh, mode, traffic)
                table.rows.append((mode.value, float(frac), int(seed), m.delivered, m.total_hops, m.max_latency))
    return table
