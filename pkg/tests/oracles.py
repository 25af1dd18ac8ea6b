"""Independent reference computations used to check the library."""
from __future__ import annotations

from collections import deque
from typing import Dict, Iterable, List, Optional, Set, Tuple


def adjacency(edges: Iterable[Tuple[int, int]], n: int) -> Dict[int, Set[int]]:
    adj = {v: set() for v in range(1, n + 1)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return adj


def all_simple_paths(adj: Dict[int, Set[int]], src: int, dst: int) -> List[Tuple[int, ...]]:
    """Exhaustive DFS; exponential, only for small graphs."""
    out = []
    stack = [(src, (src,))]
    while stack:
        v, path = stack.pop()
        if v == dst:
            out.append(path)
            continue
        for w in adj[v]:
            if w not in path:
                stack.append((w, path + (w,)))
    return out


def lexicographic_shortest(adj, src, dst) -> Optional[Tuple[int, ...]]:
    paths = all_simple_paths(adj, src, dst)
    if not paths:
        return None
    best = min(len(p) for p in paths)
    return min(p for p in paths if len(p) == best)


def bfs_hops(adj, src, dst) -> Optional[int]:
    """Textbook BFS distance in edges."""
    seen = {src: 0}
    q = deque([src])
    while q:
        v = q.popleft()
        if v == dst:
            return seen[v]
        for w in sorted(adj[v]):
            if w not in seen:
                seen[w] = seen[v] + 1
                q.append(w)
    return None


def loss_for_sequential_install(n_rules: int, per_rule_ms: int, install_at_ms: int, count: int) -> int:
    """Packets lost when a path of ``n_rules`` is installed one by one at 1 pkt/ms.

    Enumerates each packet against the activation instant of the last rule.
    """
    ready = install_at_ms
    for _ in range(n_rules):
        ready += per_rule_ms
    return sum(1 for i in range(count) if i < ready)
