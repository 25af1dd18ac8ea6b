"""Host-to-host path computation and one-directional flow compilation.

Algorithms are plain functions ``(graph, src, dst) -> [DeviceId, ...] | None``
kept in a name registry.  Whatever an algorithm returns is checked against the
graph before it is turned into a :class:`HostPath`, so a faulty plugin can
never reach the install path.
"""
from __future__ import annotations

import heapq
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from umbrella.model import (
    DeviceId,
    FlowRule,
    Host,
    Link,
    MatchFields,
    Output,
    PortId,
    TopologySnapshot,
)

DEFAULT_PRIORITY = 100


class NoPath(LookupError):
    pass


class UnknownAlgorithm(LookupError):
    pass


class DuplicateName(ValueError):
    pass


class AlgorithmContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class Edge:
    src: PortId
    dst: PortId
    weight: float = 1.0


class NetGraph:
    """Directed switch graph built from the inter-switch links of a snapshot.

    Between any ordered pair of devices only the lowest-weight link (then the
    lowest port pair) is kept as the representative edge.
    """

    def __init__(self, vertices, edges: Sequence[Edge] = ()):
        self.vertices = frozenset(vertices)
        self._out: Dict[DeviceId, Dict[DeviceId, Edge]] = {v: {} for v in self.vertices}
        self._in: Dict[DeviceId, Dict[DeviceId, Edge]] = {v: {} for v in self.vertices}
        self.edge_count = 0
        for e in edges:
            a, b = e.src.device, e.dst.device
            if a not in self._out or b not in self._out:
                raise ValueError(f"edge {e} references a device outside the graph")
            if not e.weight > 0:
                raise ValueError(f"edge weights must be positive: {e}")
            self.edge_count += 1
            cur = self._out[a].get(b)
            if cur is None or (e.weight, e.src, e.dst) < (cur.weight, cur.src, cur.dst):
                self._out[a][b] = e
                self._in[b][a] = e

    def successors(self, v: DeviceId) -> List[DeviceId]:
        return sorted(self._out[v])

    def predecessors(self, v: DeviceId) -> List[DeviceId]:
        return sorted(self._in[v])

    def edge(self, a: DeviceId, b: DeviceId) -> Optional[Edge]:
        return self._out.get(a, {}).get(b)

    def degree(self, v: DeviceId) -> int:
        return len(self._out[v]) + len(self._in[v])

    def __len__(self):
        return len(self.vertices)


def build_graph(snapshot: TopologySnapshot, weights: Optional[Mapping[Link, float]] = None) -> NetGraph:
    weights = weights or {}
    edges = [Edge(l.src, l.dst, float(weights.get(l, 1.0))) for l in snapshot.links]
    return NetGraph(snapshot.devices.keys(), edges)


# -- built-in algorithms ------------------------------------------------------

def _greedy_lexicographic(graph: NetGraph, src: DeviceId, dst: DeviceId,
                          dist: Dict[DeviceId, float]) -> Optional[List[DeviceId]]:
    """Walk from src, always taking the smallest successor that stays on a shortest path."""
    if src not in dist:
        return None
    path = [src]
    cur = src
    while cur != dst:
        for nxt in graph.successors(cur):
            if nxt in dist and math.isclose(graph.edge(cur, nxt).weight + dist[nxt], dist[cur]):
                cur = nxt
                break
        else:  # pragma: no cover - dist is consistent by construction
            return None
        path.append(cur)
    return path


def bfs(graph: NetGraph, src: DeviceId, dst: DeviceId) -> Optional[List[DeviceId]]:
    """Minimum hop count; ties go to the lexicographically smallest device sequence."""
    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        v = queue.popleft()
        for u in graph.predecessors(v):
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    unit = {v: float(d) for v, d in dist.items()}
    return _greedy_lexicographic(_UnitView(graph), src, dst, unit)


def dijkstra(graph: NetGraph, src: DeviceId, dst: DeviceId) -> Optional[List[DeviceId]]:
    """Minimum total edge weight, same lexicographic tie-break as :func:`bfs`."""
    dist = {dst: 0.0}
    heap = [(0.0, dst)]
    done = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for u in graph.predecessors(v):
            nd = d + graph.edge(u, v).weight
            if nd < dist.get(u, math.inf):
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return _greedy_lexicographic(graph, src, dst, dist)


class _UnitView:
    """Graph adapter that reports every edge with weight 1."""

    def __init__(self, graph: NetGraph):
        self._g = graph

    def successors(self, v):
        return self._g.successors(v)

    def edge(self, a, b):
        e = self._g.edge(a, b)
        return Edge(e.src, e.dst, 1.0)


# -- registry -------------------------------------------------------------------

AlgorithmFn = Callable[[NetGraph, DeviceId, DeviceId], Optional[Sequence[DeviceId]]]


@dataclass(frozen=True)
class PathAlgorithm:
    name: str
    function: AlgorithmFn


class AlgorithmRegistry:
    def __init__(self, builtins: Sequence[PathAlgorithm] = ()):
        self._algs: Dict[str, PathAlgorithm] = {}
        self._lock = threading.Lock()
        for alg in builtins:
            self.register(alg)

    def register(self, alg: PathAlgorithm) -> None:
        with self._lock:
            if alg.name in self._algs:
                raise DuplicateName(f"path algorithm {alg.name!r} already registered")
            self._algs = {**self._algs, alg.name: alg}

    def get(self, name: str) -> PathAlgorithm:
        try:
            return self._algs[name]
        except KeyError:
            raise UnknownAlgorithm(f"no path algorithm named {name!r}") from None

    def names(self) -> List[str]:
        return sorted(self._algs)


DEFAULT_ALGORITHM = "bfs"

default_registry = AlgorithmRegistry([PathAlgorithm("bfs", bfs), PathAlgorithm("dijkstra", dijkstra)])


def register_algorithm(alg: PathAlgorithm, registry: Optional[AlgorithmRegistry] = None) -> None:
    (registry or default_registry).register(alg)


# -- host paths -------------------------------------------------------------------

@dataclass(frozen=True)
class Hop:
    device: DeviceId
    in_port: PortId
    out_port: PortId


@dataclass(frozen=True)
class HostPath:
    src: Host
    dst: Host
    hops: Tuple[Hop, ...] = field(default_factory=tuple)

    @property
    def devices(self) -> List[DeviceId]:
        return [h.device for h in self.hops]


def _validate(graph: NetGraph, seq, src: DeviceId, dst: DeviceId, name: str) -> List[DeviceId]:
    seq = list(seq)
    if not seq or seq[0] != src or seq[-1] != dst:
        raise AlgorithmContractViolation(f"{name}: path must run from {src} to {dst}, got {seq}")
    if len(set(seq)) != len(seq):
        raise AlgorithmContractViolation(f"{name}: path repeats a device: {seq}")
    for v in seq:
        if v not in graph.vertices:
            raise AlgorithmContractViolation(f"{name}: {v} is not in the graph")
    for a, b in zip(seq, seq[1:]):
        if graph.edge(a, b) is None:
            raise AlgorithmContractViolation(f"{name}: no link {a} -> {b}")
    return seq


def shortest_path(graph: NetGraph, src_host: Host, dst_host: Host,
                  algorithm: Optional[str] = None,
                  registry: Optional[AlgorithmRegistry] = None) -> HostPath:
    registry = registry or default_registry
    alg = registry.get(algorithm or DEFAULT_ALGORITHM)
    a, b = src_host.attachment.device, dst_host.attachment.device
    for v in (a, b):
        if v not in graph.vertices:
            raise NoPath(f"host attached to {v}, which is not in the graph")
    seq = alg.function(graph, a, b)
    if seq is None:
        raise NoPath(f"no path from {a} to {b}")
    seq = _validate(graph, seq, a, b, alg.name)
    hops = []
    for i, dev in enumerate(seq):
        in_port = src_host.attachment if i == 0 else graph.edge(seq[i - 1], dev).dst
        out_port = dst_host.attachment if i == len(seq) - 1 else graph.edge(dev, seq[i + 1]).src
        hops.append(Hop(dev, in_port, out_port))
    return HostPath(src_host, dst_host, tuple(hops))


def compile_one_directional(path: HostPath, priority: int = DEFAULT_PRIORITY,
                            match_template: Optional[MatchFields] = None) -> List[FlowRule]:
    """One rule per hop forwarding traffic for ``path.dst`` toward it; nothing in reverse."""
    template = match_template or MatchFields()
    return [
        FlowRule(
            device=hop.device,
            match=template.merged(eth_dst=path.dst.mac, in_port=hop.in_port.port_no),
            actions=(Output(hop.out_port.port_no),),
            priority=priority,
        )
        for hop in path.hops
    ]
