"""Integer-indexed DAGs with guarded mutation, Markov blankets and d-separation."""

from __future__ import annotations

import heapq
from typing import Iterable

from .errors import CycleError, ValidationError

Edge = tuple[int, int]


class Dag:
    """Directed acyclic graph over nodes ``0 .. node_count - 1``.

    Mutators refuse any edge that would close a directed cycle, so an
    instance is acyclic at all times.
    """

    __slots__ = ("node_count", "_parents", "_children")

    def __init__(self, node_count: int, edges: Iterable[Edge] = ()):
        if node_count < 0:
            raise ValidationError("node_count must be nonnegative")
        self.node_count = node_count
        self._parents: list[set[int]] = [set() for _ in range(node_count)]
        self._children: list[set[int]] = [set() for _ in range(node_count)]
        for u, v in edges:
            self.add_edge(u, v)

    def copy(self) -> Dag:
        g = Dag(self.node_count)
        g._parents = [set(p) for p in self._parents]
        g._children = [set(c) for c in self._children]
        return g

    @property
    def edges(self) -> list[Edge]:
        return sorted((u, v) for v, ps in enumerate(self._parents) for u in ps)

    def edge_set(self) -> frozenset[Edge]:
        return frozenset((u, v) for v, ps in enumerate(self._parents) for u in ps)

    def parents(self, v: int) -> frozenset[int]:
        return frozenset(self._parents[v])

    def children(self, v: int) -> frozenset[int]:
        return frozenset(self._children[v])

    def has_edge(self, u: int, v: int) -> bool:
        return u in self._parents[v]

    def __contains__(self, edge: Edge) -> bool:
        return self.has_edge(*edge)

    def __len__(self) -> int:
        return sum(len(p) for p in self._parents)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self.node_count == other.node_count and self._parents == other._parents

    def __repr__(self) -> str:
        return f"Dag({self.node_count}, {self.edges})"

    def _check_node(self, *nodes: int) -> None:
        for x in nodes:
            if not 0 <= x < self.node_count:
                raise ValidationError(f"node {x} out of range for {self.node_count}-node graph")

    def reachable(self, src: int, dst: int, skip_edge: Edge | None = None) -> bool:
        """True iff a directed path src -> ... -> dst exists (optionally ignoring one edge)."""
        if src == dst:
            return True
        seen = {src}
        stack = [src]
        while stack:
            u = stack.pop()
            for w in self._children[u]:
                if (u, w) == skip_edge or w in seen:
                    continue
                if w == dst:
                    return True
                seen.add(w)
                stack.append(w)
        return False

    def descendants(self, v: int) -> set[int]:
        seen: set[int] = set()
        stack = [v]
        while stack:
            u = stack.pop()
            for w in self._children[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def ancestors(self, v: int) -> set[int]:
        seen: set[int] = set()
        stack = [v]
        while stack:
            u = stack.pop()
            for w in self._parents[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def add_edge(self, u: int, v: int) -> None:
        self._check_node(u, v)
        if u == v:
            raise CycleError(f"self-loop on node {u}")
        if self.has_edge(u, v):
            return
        if self.reachable(v, u):
            raise CycleError(f"adding {u}->{v} would create a cycle")
        self._parents[v].add(u)
        self._children[u].add(v)

    def remove_edge(self, u: int, v: int) -> None:
        if not self.has_edge(u, v):
            raise ValidationError(f"edge {u}->{v} not present")
        self._parents[v].discard(u)
        self._children[u].discard(v)

    def reverse_edge(self, u: int, v: int) -> None:
        if not self.has_edge(u, v):
            raise ValidationError(f"edge {u}->{v} not present")
        if self.reachable(u, v, skip_edge=(u, v)):
            raise CycleError(f"reversing {u}->{v} would create a cycle")
        self.remove_edge(u, v)
        self._parents[u].add(v)
        self._children[v].add(u)


def would_create_cycle(g: Dag, edge: Edge) -> bool:
    """True iff adding ``edge`` (absent from ``g``) would close a directed cycle.

    If the reverse edge is present, this answers the reversal question: the
    direct edge itself is ignored and only an alternative path counts.
    """
    u, v = edge
    if u == v:
        return True
    if g.has_edge(v, u):
        return g.reachable(v, u, skip_edge=(v, u))
    return g.reachable(v, u)


def has_cycle(node_count: int, edges: Iterable[Edge]) -> bool:
    """Full check on a raw edge list, independent of :class:`Dag`'s guard."""
    children: list[list[int]] = [[] for _ in range(node_count)]
    indeg = [0] * node_count
    for u, v in edges:
        children[u].append(v)
        indeg[v] += 1
    queue = [i for i in range(node_count) if indeg[i] == 0]
    seen = 0
    while queue:
        u = queue.pop()
        seen += 1
        for w in children[u]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen != node_count


def topological_order(g: Dag) -> list[int]:
    """Kahn's algorithm with a min-heap, so ties go to the smallest index."""
    indeg = [len(p) for p in g._parents]
    heap = [i for i in range(g.node_count) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for w in g._children[u]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, w)
    if len(order) != g.node_count:
        raise CycleError("graph contains a directed cycle")
    return order


def markov_blanket(g: Dag, target: int) -> frozenset[int]:
    g._check_node(target)
    blanket = set(g._parents[target]) | g._children[target]
    for c in g._children[target]:
        blanket |= g._parents[c]
    blanket.discard(target)
    return frozenset(blanket)


def mb_subgraph(g: Dag, targets: Iterable[int]) -> tuple[Dag, list[int]]:
    """Restrict ``g`` to the targets plus their Markov blankets.

    Returns the induced subgraph (re-indexed) and ``mapping`` where
    ``mapping[new_index] = original_index``; retained nodes keep their
    original relative order.
    """
    targets = set(targets)
    if not targets:
        raise ValidationError("mb_subgraph needs at least one target")
    keep = set(targets)
    for t in targets:
        keep |= markov_blanket(g, t)
    mapping = sorted(keep)
    new_index = {old: new for new, old in enumerate(mapping)}
    sub = Dag(len(mapping))
    for u, v in g.edges:
        if u in new_index and v in new_index:
            sub.add_edge(new_index[u], new_index[v])
    return sub, mapping


def d_separated(g: Dag, x: int, y: int, z: Iterable[int]) -> bool:
    """Decide whether ``x`` and ``y`` are d-separated by ``z``.

    Uses the moralized ancestral graph: restrict to ancestors of
    ``{x, y} | z``, marry co-parents, drop directions, delete ``z`` and test
    connectivity.
    """
    z = set(z)
    if x == y:
        raise ValidationError("d_separated needs two distinct nodes")
    if x in z or y in z:
        raise ValidationError("conditioning set must not contain x or y")
    relevant = {x, y} | z
    for v in list(relevant):
        relevant |= g.ancestors(v)
    adj: dict[int, set[int]] = {v: set() for v in relevant}
    for v in relevant:
        ps = [p for p in g._parents[v] if p in relevant]
        for p in ps:
            adj[v].add(p)
            adj[p].add(v)
        for i, a in enumerate(ps):
            for b in ps[i + 1:]:
                adj[a].add(b)
                adj[b].add(a)
    seen = {x}
    stack = [x]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w in z or w in seen:
                continue
            if w == y:
                return False
            seen.add(w)
            stack.append(w)
    return True
