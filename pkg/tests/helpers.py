"""Shared test utilities: independent oracles and fixture builders.

The oracles here re-derive the update rules from their plain definitions
(dict-based payoff lookup over state strings, explicit neighbor loops) so
they share no code path with the bit-twiddling implementation they check.
"""

from __future__ import annotations

from array import array

from coordyn.game import AgentSpec, Instance, PayoffMatrix, UpdateRule
from coordyn.rng import SplitMix64
from coordyn.topology import Graph, random_tree
from coordyn.verifier import TransitionGraph, random_payoff_matrix


# ---------------------------------------------------------------------------
# Naive rule oracles (string states, dict payoffs)
# ---------------------------------------------------------------------------


def payoff_table(pm: PayoffMatrix) -> dict[str, dict[str, int]]:
    return {"A": {"A": pm.r, "B": pm.s}, "B": {"A": pm.t, "B": pm.p}}


def oracle_utility(instance: Instance, state: str, agent: int) -> int:
    table = payoff_table(instance.agents[agent].payoff)
    return sum(table[state[agent]][state[j]] for j in instance.graph.adjacency[agent])


def oracle_best_response(instance: Instance, state: str, agent: int) -> str:
    totals = {}
    for candidate in "AB":
        fixed = state[:agent] + candidate + state[agent + 1 :]
        totals[candidate] = oracle_utility(instance, fixed, agent)
    if totals["A"] > totals["B"]:
        return "A"
    if totals["B"] > totals["A"]:
        return "B"
    return state[agent]


def oracle_imitation(instance: Instance, state: str, agent: int) -> str:
    nbrs = instance.graph.adjacency[agent]
    utilities = [(oracle_utility(instance, state, j), state[j]) for j in nbrs]
    best = max(u for u, _ in utilities)
    strategies = {s for u, s in utilities if u == best}
    if len(strategies) == 2:
        return state[agent]
    return strategies.pop()


def oracle_update(instance: Instance, state: str, agent: int) -> str:
    if instance.agents[agent].rule is UpdateRule.IMITATOR:
        return oracle_imitation(instance, state, agent)
    return oracle_best_response(instance, state, agent)


def oracle_section_count(state_chars: str) -> int:
    """Run-length count of a path state rendered as a string."""
    runs = 1
    for a, b in zip(state_chars, state_chars[1:]):
        if a != b:
            runs += 1
    return runs


# ---------------------------------------------------------------------------
# Fixture builders
# ---------------------------------------------------------------------------


def mk_instance(graph: Graph, rules: str, payoffs) -> Instance:
    """rules: string over {'b', 'i'} per agent; payoffs: one tuple or a list."""
    if isinstance(payoffs, tuple):
        payoffs = [payoffs] * graph.n
    agents = tuple(
        AgentSpec(
            UpdateRule.IMITATOR if ch == "i" else UpdateRule.BEST_RESPONDER,
            PayoffMatrix(*pm),
        )
        for ch, pm in zip(rules, payoffs)
    )
    return Instance(graph, agents)


def random_rules(n: int, rng: SplitMix64) -> str:
    return "".join("i" if rng.randrange(2) else "b" for _ in range(n))


def random_instance(rng: SplitMix64, n_lo: int = 2, n_hi: int = 8) -> Instance:
    n = rng.randint(n_lo, n_hi)
    graph = random_tree(n, rng)
    payoffs = [random_payoff_matrix(rng).as_tuple() for _ in range(n)]
    return mk_instance(graph, random_rules(n, rng), payoffs)


def random_connected_graph(n: int, extra_edges: int, rng: SplitMix64) -> Graph:
    """Random tree plus up to extra_edges additional random edges."""
    tree = random_tree(n, rng)
    edges = set(tree.edges())
    attempts = 0
    while extra_edges > 0 and attempts < 20 * extra_edges:
        attempts += 1
        u, v = rng.randrange(n), rng.randrange(n)
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in edges:
            continue
        edges.add(key)
        extra_edges -= 1
    return Graph.from_edges(n, sorted(edges))


def always_switch_table(k: int) -> TransitionGraph:
    """Forged k-agent automaton where every activation flips the agent's bit.

    Not a coordination instance: the whole 2^k state space is one strongly
    connected component with a forced cycle, so the fair-cycle search must
    always find a witness.
    """
    n_states = 1 << k
    delta = array("I", bytes(4 * n_states * k))
    for s in range(n_states):
        for a in range(k):
            delta[s * k + a] = s ^ (1 << a)
    return TransitionGraph(k, n_states, delta, frozenset())


def brute_admitted_paths(graph: Graph) -> set[tuple[int, ...]]:
    """Independent enumeration of maximal admitted paths.

    Generates every simple path, keeps those whose interior nodes all have
    host-degree 2, and drops any path extendable by one node at either end
    while keeping that property. Paths are canonicalized by orientation.
    Not meaningful for 2-regular graphs (rings), which have no terminals.
    """
    admitted: list[list[int]] = []
    frontier = [[v] for v in range(graph.n)]
    while frontier:
        nxt = []
        for path in frontier:
            for w in graph.adjacency[path[-1]]:
                if w in path:
                    continue
                cand = path + [w]
                if all(graph.degree(v) == 2 for v in cand[1:-1]):
                    admitted.append(cand)
                    nxt.append(cand)
        frontier = nxt

    def extendable(path: list[int]) -> bool:
        for end, inner in ((path[0], path), (path[-1], path)):
            if graph.degree(end) == 2 and any(w not in inner for w in graph.adjacency[end]):
                return True
        return False

    return {
        min(tuple(p), tuple(reversed(p)))
        for p in admitted
        if len(p) >= 2 and not extendable(p)
    }
