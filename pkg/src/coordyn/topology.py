"""Graph construction, family classification, and path-structure extraction.

Nodes are 0-based ints internally; every serialized format (edge-list text,
JSON configs, trace files) uses 1-based ids.

Families are classified most-specific-first: a path is Linear even though
it is also a degenerate starlike, and a starlike is Starlike even though it
is also a tree whose branching agents are trivially far apart. A "branching
agent" is a node of degree >= 3 (strictly more than two neighbors).
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

from .errors import (
    InvalidGraph,
    NotATree,
    NotBranching,
    NotBranchingAgent,
    TooSmall,
)
from .rng import SplitMix64


@dataclass(frozen=True)
class Graph:
    """Undirected simple connected graph with sorted adjacency lists."""

    n: int
    adjacency: tuple[tuple[int, ...], ...]

    @staticmethod
    def from_edges(n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        """Build and validate a graph from 0-based edge pairs.

        Rejects self-loops, multi-edges, out-of-range endpoints, and
        disconnected graphs.
        """
        if n < 1:
            raise InvalidGraph(f"graph needs at least one node, got n={n}")
        adj: list[set[int]] = [set() for _ in range(n)]
        seen: set[tuple[int, int]] = set()
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise InvalidGraph(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise InvalidGraph(f"self-loop at node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InvalidGraph(f"multi-edge between {u} and {v}")
            seen.add(key)
            adj[u].add(v)
            adj[v].add(u)
        g = Graph(n, tuple(tuple(sorted(s)) for s in adj))
        if not g._connected():
            raise InvalidGraph("graph is not connected")
        return g

    def _connected(self) -> bool:
        seen = {0}
        frontier = deque([0])
        while frontier:
            u = frontier.popleft()
            for w in self.adjacency[u]:
                if w not in seen:
                    seen.add(w)
                    frontier.append(w)
        return len(seen) == self.n

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    @cached_property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @cached_property
    def is_tree(self) -> bool:
        # Connected is a construction invariant, so tree <=> n-1 edges.
        return self.edge_count == self.n - 1

    @cached_property
    def neighbor_masks(self) -> tuple[int, ...]:
        """Per-node bitmask of neighbor positions; the hot path for utilities."""
        masks = []
        for nbrs in self.adjacency:
            m = 0
            for w in nbrs:
                m |= 1 << w
            masks.append(m)
        return tuple(masks)

    def distances_from(self, src: int) -> list[int]:
        dist = [-1] * self.n
        dist[src] = 0
        frontier = deque([src])
        while frontier:
            u = frontier.popleft()
            for w in self.adjacency[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    frontier.append(w)
        return dist


class Family(Enum):
    LINEAR = "linear"
    RING = "ring"
    STARLIKE = "starlike"
    SPARSE_TREE = "sparse_tree"
    DENSE_TREE = "dense_tree"
    GENERAL = "general"


class EndCondition(Enum):
    LEAF = "leaf"
    EXTERNALLY_ATTACHED = "externally_attached"


@dataclass(frozen=True)
class Branch:
    """Path hanging off a branching agent, from its neighbor out to a leaf.

    The anchor (the branching agent itself) is adjacent to agents[0] but is
    not part of the branch. In a sparse tree the walk stops before reaching
    any other branching agent.
    """

    agents: tuple[int, ...]
    anchor: int


@dataclass(frozen=True)
class AdmittedPath:
    """Maximal path whose interior nodes have host-degree exactly 2.

    End conditions record whether each endpoint is a leaf of the host graph
    or carries edges outside the path (so monitors know which endpoints can
    inject new sections when they switch).
    """

    agents: tuple[int, ...]
    end_conditions: tuple[EndCondition, EndCondition]

    def __len__(self) -> int:
        return len(self.agents)


def make_linear(n: int) -> Graph:
    """Path graph on nodes 0..n-1."""
    if n < 2:
        raise TooSmall(f"linear graph needs n >= 2, got {n}")
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def make_ring(n: int) -> Graph:
    """Cycle graph on nodes 0..n-1."""
    if n < 3:
        raise TooSmall(f"ring needs n >= 3, got {n}")
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def make_starlike(branch_lengths: Sequence[int]) -> Graph:
    """Center node 0 with disjoint paths of the given lengths attached."""
    if len(branch_lengths) < 3:
        raise NotBranching(
            f"starlike needs >= 3 branches (got {len(branch_lengths)}); use make_linear"
        )
    if any(length < 1 for length in branch_lengths):
        raise TooSmall("every branch must have length >= 1")
    edges = []
    nxt = 1
    for length in branch_lengths:
        prev = 0
        for _ in range(length):
            edges.append((prev, nxt))
            prev = nxt
            nxt += 1
    return Graph.from_edges(nxt, edges)


def branching_agents(graph: Graph) -> list[int]:
    return [v for v in range(graph.n) if graph.degree(v) >= 3]


def is_sparse_tree(graph: Graph) -> bool:
    """True iff every pair of branching agents is at distance >= 3.

    Vacuously true with at most one branching agent. Raises NotATree for
    graphs with cycles.
    """
    if not graph.is_tree:
        raise NotATree("sparseness is defined for trees only")
    hubs = branching_agents(graph)
    for i, u in enumerate(hubs):
        dist = graph.distances_from(u)
        for v in hubs[i + 1 :]:
            if dist[v] < 3:
                return False
    return True


def classify(graph: Graph) -> Family:
    """Most specific family of the graph."""
    if graph.is_tree:
        hubs = branching_agents(graph)
        if not hubs:
            return Family.LINEAR
        if len(hubs) == 1:
            return Family.STARLIKE
        return Family.SPARSE_TREE if is_sparse_tree(graph) else Family.DENSE_TREE
    if all(graph.degree(v) == 2 for v in range(graph.n)):
        return Family.RING
    return Family.GENERAL


def path_order(graph: Graph) -> list[int]:
    """Node sequence of a Linear graph from one leaf to the other.

    Starts at the lower-id leaf so the order is deterministic.
    """
    if classify(graph) is not Family.LINEAR:
        raise InvalidGraph("path_order applies to Linear graphs only")
    if graph.n == 1:
        return [0]
    start = min(v for v in range(graph.n) if graph.degree(v) == 1)
    order = [start]
    prev, cur = -1, start
    while len(order) < graph.n:
        nxt = next(w for w in graph.adjacency[cur] if w != prev)
        order.append(nxt)
        prev, cur = cur, nxt
    return order


def ring_order(graph: Graph) -> list[int]:
    """Node sequence around a Ring graph, starting at node 0."""
    if classify(graph) is not Family.RING:
        raise InvalidGraph("ring_order applies to Ring graphs only")
    order = [0, graph.adjacency[0][0]]
    while len(order) < graph.n:
        prev, cur = order[-2], order[-1]
        nxt = next(w for w in graph.adjacency[cur] if w != prev)
        order.append(nxt)
    return order


def branches(graph: Graph, branching_agent: int) -> list[Branch]:
    """One branch per neighbor direction of a branching agent.

    Each branch is a maximal path walked away from the anchor through
    degree-2 nodes, stopping at a leaf or just before another branching
    agent.
    """
    if not graph.is_tree:
        raise NotATree("branches are defined on trees")
    if graph.degree(branching_agent) < 3:
        raise NotBranchingAgent(
            f"node {branching_agent} has degree {graph.degree(branching_agent)} < 3"
        )
    out = []
    for first in graph.adjacency[branching_agent]:
        agents = []
        prev, cur = branching_agent, first
        while True:
            if graph.degree(cur) >= 3:
                break  # stop before any other branching agent
            agents.append(cur)
            if graph.degree(cur) == 1:
                break
            cur, prev = next(w for w in graph.adjacency[cur] if w != prev), cur
        out.append(Branch(tuple(agents), branching_agent))
    return out


def _end_condition(graph: Graph, v: int) -> EndCondition:
    return EndCondition.LEAF if graph.degree(v) == 1 else EndCondition.EXTERNALLY_ATTACHED


def admitted_linear_paths(graph: Graph, ring_anchor: int | None = None) -> list[AdmittedPath]:
    """All maximal paths whose interior nodes have host-degree exactly 2.

    Terminal nodes (degree != 2) are included as endpoints. A pure ring has
    no terminals; the caller may designate an anchor node to cut it at, in
    which case the single full arc starting there is returned, otherwise no
    paths are reported for rings.
    """
    terminals = [v for v in range(graph.n) if graph.degree(v) != 2]
    if not terminals:
        if ring_anchor is None:
            return []
        order = ring_order(graph)
        k = order.index(ring_anchor)
        arc = tuple(order[k:] + order[:k])
        return [
            AdmittedPath(
                arc, (EndCondition.EXTERNALLY_ATTACHED, EndCondition.EXTERNALLY_ATTACHED)
            )
        ]

    found: dict[tuple[int, ...], AdmittedPath] = {}
    for t in terminals:
        for first in graph.adjacency[t]:
            seq = [t]
            prev, cur = t, first
            while True:
                seq.append(cur)
                if graph.degree(cur) != 2:
                    break
                nxt = next(w for w in graph.adjacency[cur] if w != prev)
                if nxt == t:
                    break  # chain loops back to its own terminal; stop before repeating it
                prev, cur = cur, nxt
            key = min(tuple(seq), tuple(reversed(seq)))
            if key not in found:
                left, right = seq[0], seq[-1]
                path = AdmittedPath(
                    tuple(seq), (_end_condition(graph, left), _end_condition(graph, right))
                )
                if tuple(seq) != key:
                    path = AdmittedPath(
                        tuple(reversed(seq)), (path.end_conditions[1], path.end_conditions[0])
                    )
                found[key] = path
    return [found[k] for k in sorted(found)]


# ---------------------------------------------------------------------------
# Tree enumeration (Pruefer sequences deduplicated by canonical form)
# ---------------------------------------------------------------------------


def prufer_to_edges(seq: Sequence[int], n: int) -> list[tuple[int, int]]:
    """Decode a Pruefer sequence of length n-2 into the edges of a labeled tree."""
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    edges.append((heapq.heappop(leaves), heapq.heappop(leaves)))
    return edges


def tree_centers(graph: Graph) -> list[int]:
    """The one or two middle nodes of a tree (peel leaves until <= 2 remain)."""
    if not graph.is_tree:
        raise NotATree("centers are defined on trees")
    n = graph.n
    if n <= 2:
        return list(range(n))
    degree = [graph.degree(v) for v in range(n)]
    layer = [v for v in range(n) if degree[v] == 1]
    remaining = n
    while remaining > 2:
        remaining -= len(layer)
        nxt = []
        for leaf in layer:
            degree[leaf] = 0
            for w in graph.adjacency[leaf]:
                degree[w] -= 1
                if degree[w] == 1:
                    nxt.append(w)
        layer = nxt
    return sorted(layer)


def _rooted_canonical(graph: Graph, root: int) -> str:
    def label(v: int, parent: int) -> str:
        subs = sorted(label(w, v) for w in graph.adjacency[v] if w != parent)
        return "(" + "".join(subs) + ")"

    return label(root, -1)


def tree_canonical_form(graph: Graph) -> str:
    """Isomorphism-invariant label of a tree (canonical rooted form at a center)."""
    return min(_rooted_canonical(graph, c) for c in tree_centers(graph))


@lru_cache(maxsize=None)
def nonisomorphic_trees(n: int) -> tuple[Graph, ...]:
    """All trees on n nodes up to isomorphism.

    Enumerates every Pruefer sequence and keeps one representative per
    canonical form. Intended for small n (the verifier's sweep range);
    n = 8 decodes 8^6 sequences in a few seconds and is cached.
    """
    if n < 1:
        raise TooSmall("need n >= 1")
    if n == 1:
        return (Graph(1, ((),)),)
    if n == 2:
        return (make_linear(2),)
    reps: dict[str, Graph] = {}
    for seq in itertools.product(range(n), repeat=n - 2):
        g = Graph.from_edges(n, prufer_to_edges(seq, n))
        key = tree_canonical_form(g)
        if key not in reps:
            reps[key] = g
    return tuple(reps[k] for k in sorted(reps))


def random_tree(n: int, rng: SplitMix64) -> Graph:
    """Uniform random labeled tree on n nodes via a random Pruefer sequence."""
    if n < 2:
        raise TooSmall("need n >= 2")
    if n == 2:
        return make_linear(2)
    seq = [rng.randrange(n) for _ in range(n - 2)]
    return Graph.from_edges(n, prufer_to_edges(seq, n))


# ---------------------------------------------------------------------------
# Edge-list interchange (1-based text format: one "u v" pair per line)
# ---------------------------------------------------------------------------


def parse_edge_list(text: str) -> Graph:
    """Parse the 1-based `u v`-per-line interchange format."""
    edges = []
    max_id = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidGraph(f"line {lineno}: expected 'u v', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise InvalidGraph(f"line {lineno}: non-integer node id in {raw!r}") from None
        if u < 1 or v < 1:
            raise InvalidGraph(f"line {lineno}: node ids are 1-based, got {raw!r}")
        max_id = max(max_id, u, v)
        edges.append((u - 1, v - 1))
    if not edges:
        raise InvalidGraph("edge list is empty")
    return Graph.from_edges(max_id, edges)


def format_edge_list(graph: Graph) -> str:
    return "\n".join(f"{u + 1} {v + 1}" for u, v in graph.edges()) + "\n"
