"""Directed sensing graph with a leader/follower split.

Agents are numbered 1..n; ids 1..m are leaders and m+1..n are followers.
An edge ``(i, j)`` means agent ``i`` obtains information from agent ``j``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import StructuralError

__all__ = [
    "FormationGraph",
    "build_graph",
    "disjoint_path_count",
    "is_two_reachable",
    "follower_subgraph_undirected",
    "symmetrize_follower_edges",
    "DEFAULT_PAIRS",
    "CHAIN_PAIRS",
]

# Topology of the bundled six-agent scenarios. It is the only localizable
# choice of neighbor pairs under which the published target shape at t = 6
# lies in the null space of the constraint matrix.
DEFAULT_PAIRS = {4: (2, 3), 5: (1, 2), 6: (4, 5)}
# Alternative six-agent topology (followers chained through 4 and 5).
CHAIN_PAIRS = {4: (3, 5), 5: (2, 4), 6: (4, 5)}


@dataclass(frozen=True)
class FormationGraph:
    n: int
    m: int
    constraint_neighbors: Mapping[int, tuple[int, int]]
    comm_edges: frozenset = field(default_factory=frozenset)

    @property
    def leaders(self) -> range:
        return range(1, self.m + 1)

    @property
    def followers(self) -> range:
        return range(self.m + 1, self.n + 1)

    def is_leader(self, i: int) -> bool:
        return 1 <= i <= self.m

    def constraint_edges(self) -> set[tuple[int, int]]:
        out = set()
        for i, (j, k) in self.constraint_neighbors.items():
            out.add((i, j))
            out.add((i, k))
        return out

    def dependents(self, i: int) -> list[int]:
        """Followers ``g`` that use ``i`` as a constraint neighbor."""
        return [g for g, pair in self.constraint_neighbors.items() if i in pair]

    def extra_comm(self) -> list[tuple[int, int]]:
        return sorted(self.comm_edges - self.constraint_edges())


def build_graph(
    n: int,
    m: int,
    constraint_neighbors: Iterable[tuple[int, int, int]] | Mapping[int, tuple[int, int]],
    extra_comm: Iterable[tuple[int, int]] = (),
) -> FormationGraph:
    """Validate and assemble a :class:`FormationGraph`.

    ``constraint_neighbors`` is either a mapping ``follower -> (j, k)`` or a
    list of ``(follower, j, k)`` triples.
    """
    if not (isinstance(n, int) and isinstance(m, int)) or not 1 <= m < n:
        raise StructuralError(f"need integers 1 <= m < n, got n={n}, m={m}", field="graph")

    if isinstance(constraint_neighbors, Mapping):
        triples = [(i, *pair) for i, pair in constraint_neighbors.items()]
    else:
        triples = [tuple(t) for t in constraint_neighbors]

    def check_id(a, what):
        if not isinstance(a, int) or not 1 <= a <= n:
            raise StructuralError(f"{what} id {a!r} out of range 1..{n}", field="constraint_neighbors", agent=a)

    pairs: dict[int, tuple[int, int]] = {}
    for t in triples:
        if len(t) != 3:
            raise StructuralError(f"constraint entry {t!r} is not (follower, j, k)", field="constraint_neighbors")
        i, j, k = t
        for a in t:
            check_id(a, "agent")
        if i <= m:
            raise StructuralError(f"agent {i} is a leader and cannot carry a constraint pair",
                                  field="constraint_neighbors", agent=i)
        if i in pairs:
            raise StructuralError(f"duplicate constraint entry for follower {i}", field="constraint_neighbors", agent=i)
        if j == k:
            raise StructuralError(f"follower {i}: constraint neighbors must differ (j = k = {j})",
                                  field="constraint_neighbors", agent=i)
        if i in (j, k):
            raise StructuralError(f"follower {i} lists itself as a constraint neighbor",
                                  field="constraint_neighbors", agent=i)
        pairs[i] = (j, k)

    missing = [i for i in range(m + 1, n + 1) if i not in pairs]
    if missing:
        raise StructuralError(f"followers without a constraint pair: {missing}",
                              field="constraint_neighbors", agent=missing[0])

    edges = set()
    for i, (j, k) in pairs.items():
        edges.update({(i, j), (i, k)})
    for e in extra_comm:
        a, b = e
        check_id(a, "comm edge")
        check_id(b, "comm edge")
        if a == b:
            raise StructuralError(f"self loop ({a}, {b}) in comm edges", field="extra_comm", agent=a)
        edges.add((a, b))

    return FormationGraph(n, m, dict(sorted(pairs.items())), frozenset(edges))


def disjoint_path_count(adj: Mapping[int, Iterable[int]], source: int, targets: Iterable[int],
                        limit: int | None = None) -> int:
    """Number of vertex-disjoint directed paths from ``source`` into ``targets``.

    Paths share no vertex other than ``source``; in particular they end at
    distinct targets. Computed as a unit-vertex-capacity max flow (each vertex
    split into in/out halves joined by a capacity-1 arc) with BFS augmenting
    paths. Stops early once ``limit`` paths are found.
    """
    targets = set(targets)
    if source in targets:
        raise ValueError("source must not be a target")
    SINK = ("sink",)
    cap: dict = {}

    def arc(u, v, c):
        cap[(u, v)] = cap.get((u, v), 0) + c
        cap.setdefault((v, u), 0)

    nodes = set(adj) | {v for vs in adj.values() for v in vs} | targets | {source}
    for v in nodes:
        if v != source:
            arc(("in", v), ("out", v), 1)
    for u, vs in adj.items():
        for v in vs:
            if v == source or u in targets:
                continue
            tail = ("src",) if u == source else ("out", u)
            arc(tail, ("in", v), 1)
    for t in targets:
        arc(("out", t), SINK, 1)

    nbrs: dict = {}
    for (u, v) in cap:
        nbrs.setdefault(u, []).append(v)

    flow = 0
    while limit is None or flow < limit:
        parent = {("src",): None}
        queue = deque([("src",)])
        while queue and SINK not in parent:
            u = queue.popleft()
            for v in nbrs.get(u, ()):
                if v not in parent and cap[(u, v)] > 0:
                    parent[v] = u
                    queue.append(v)
        if SINK not in parent:
            break
        v = SINK
        while parent[v] is not None:
            u = parent[v]
            cap[(u, v)] -= 1
            cap[(v, u)] += 1
            v = u
        flow += 1
    return flow


def _constraint_adjacency(g: FormationGraph) -> dict[int, list[int]]:
    return {i: list(pair) for i, pair in g.constraint_neighbors.items()}


def is_two_reachable(g: FormationGraph, i: int) -> bool:
    """True iff follower ``i`` has two vertex-disjoint constraint paths to the leaders."""
    if g.is_leader(i) or not 1 <= i <= g.n:
        raise StructuralError(f"agent {i} is not a follower", agent=i)
    return disjoint_path_count(_constraint_adjacency(g), i, g.leaders, limit=2) >= 2


def follower_subgraph_undirected(g: FormationGraph) -> bool:
    for (a, b) in g.comm_edges:
        if not g.is_leader(a) and not g.is_leader(b) and (b, a) not in g.comm_edges:
            return False
    return True


def symmetrize_follower_edges(g: FormationGraph) -> FormationGraph:
    """Add the reverse of every follower-to-follower comm edge."""
    extra = set(g.comm_edges)
    for (a, b) in g.comm_edges:
        if not g.is_leader(a) and not g.is_leader(b):
            extra.add((b, a))
    return FormationGraph(g.n, g.m, g.constraint_neighbors, frozenset(extra))
