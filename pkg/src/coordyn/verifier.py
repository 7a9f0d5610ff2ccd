"""Exact equilibration verdicts via fair-cycle search on the full state space.

A state is an equilibrium exactly when every agent's update keeps it, so
"equilibrates under every persistent activation sequence" is decidable for
small n by building the deterministic agent-labeled transition graph over
all 2^n states and searching it for a fair cycle.

Fairness characterization (the correctness core of this module): a
persistent non-equilibrating run exists if and only if some strongly
connected component Q of the transition graph satisfies

    |Q| >= 2,  and  for every agent a there is a state s in Q with
    delta(s, a) in Q.

If such a Q exists, pad a closed tour of Q with one such edge per agent
(self-loops included); replaying the tour's agent labels as the cycle of
an eventually periodic schedule visits >= 2 states forever, and the
schedule is persistent because every agent appears in the cycle. No state
on the tour can be an equilibrium, since an equilibrium is a singleton
SCC. Conversely, a persistent non-equilibrating run visits some set V of
states infinitely often; V is mutually reachable, hence inside one SCC Q,
and |V| >= 2 (a run eventually constant at a single state under a
persistent schedule would make that state an equilibrium). Every agent
activates infinitely often inside V, so each agent has an edge with both
ends in V, and therefore in Q. The per-agent condition must ask for an
edge that stays inside the component: an agent all of whose activations
exit Q would force any persistent run to leave Q.

The module also houses the instance generators (payoff grid, rule
assignment policies, graph family sweeps) used by the verification sweeps
and by the open-problem hunter, which searches dense trees and small
cyclic graphs for oscillation witnesses and reports whatever it finds.
"""

from __future__ import annotations

import itertools
from array import array
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from time import perf_counter
from typing import Iterator, Sequence

from .dynamics import EventuallyPeriodic, instance_from_dict
from .errors import TooLarge
from .game import (
    AgentSpec,
    Instance,
    PayoffMatrix,
    StrategyState,
    UpdateRule,
    is_equilibrium_bits,
    step_bits,
    update_bit,
)
from .rng import SplitMix64, derive_seed
from .topology import Graph, classify, make_linear, make_ring, nonisomorphic_trees

DEFAULT_STATE_CAP = 20

PAYOFF_GRID: tuple[PayoffMatrix, ...] = (
    PayoffMatrix(2, 0, 0, 1),
    PayoffMatrix(3, 1, 0, 2),
    PayoffMatrix(2, 0, 0, 2),
    PayoffMatrix(5, 1, 0, 4),
)


@dataclass(frozen=True)
class TransitionGraph:
    """Deterministic successor table over every state of an instance.

    delta is a flat row-major table: delta[state * n_agents + agent] is the
    state reached when that agent activates. Stored as a machine-word array
    so n = 20 (one million states, twenty million edges) stays within
    desk-scale memory.
    """

    n_agents: int
    n_states: int
    delta: array
    equilibria: frozenset[int]
    instance: Instance | None = None

    def successor(self, state: int, agent: int) -> int:
        return self.delta[state * self.n_agents + agent]


def build_transition_graph(instance: Instance, cap: int = DEFAULT_STATE_CAP) -> TransitionGraph:
    """Evaluate the update rule at every (state, agent) pair."""
    n = instance.n
    if n > cap:
        raise TooLarge(f"n={n} exceeds the verifier cap of {cap} agents")
    size = 1 << n
    delta = array("I", bytes(4 * size * n))
    equilibria = []
    for s in range(size):
        base = s * n
        fixed = True
        for a in range(n):
            if update_bit(instance, s, a):
                ns = s | (1 << a)
            else:
                ns = s & ~(1 << a)
            delta[base + a] = ns
            if ns != s:
                fixed = False
        if fixed:
            equilibria.append(s)
    return TransitionGraph(n, size, delta, frozenset(equilibria), instance)


def strongly_connected_components(
    tg: TransitionGraph, restrict: set[int] | None = None
) -> list[list[int]]:
    """Iterative Tarjan over the transition graph (optionally restricted)."""
    n_agents, delta = tg.n_agents, tg.delta
    index = [-1] * tg.n_states
    low = [0] * tg.n_states
    onstack = bytearray(tg.n_states)
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = 0
    roots = range(tg.n_states) if restrict is None else sorted(restrict)
    for root in roots:
        if index[root] != -1:
            continue
        work: list[tuple[int, int]] = [(root, 0)]
        while work:
            v, edge_ptr = work[-1]
            if edge_ptr == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                onstack[v] = 1
            descended = False
            base = v * n_agents
            while edge_ptr < n_agents:
                w = delta[base + edge_ptr]
                edge_ptr += 1
                if restrict is not None and w not in restrict:
                    continue
                if index[w] == -1:
                    work[-1] = (v, edge_ptr)
                    work.append((w, 0))
                    descended = True
                    break
                if onstack[w] and index[w] < low[v]:
                    low[v] = index[w]
            if descended:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[v] < low[parent]:
                    low[parent] = low[v]
            if low[v] == index[v]:
                component = []
                while True:
                    w = stack.pop()
                    onstack[w] = 0
                    component.append(w)
                    if w == v:
                        break
                sccs.append(component)
    return sccs


@dataclass(frozen=True)
class FairCycleWitness:
    """Replayable proof of non-equilibration under a persistent schedule.

    entry_path lists states from an initial state to the cycle's first
    state (inclusive); entry_agents are the activations along it. cycle is
    a closed walk of (state, agent) edges: activating each agent at its
    state reaches the next pair's state, and the last edge returns to the
    first state. The induced schedule replays the whole witness.
    """

    entry_path: tuple[int, ...]
    entry_agents: tuple[int, ...]
    cycle: tuple[tuple[int, int], ...]
    schedule: EventuallyPeriodic

    def cycle_states(self) -> list[int]:
        return [s for s, _ in self.cycle]


@dataclass(frozen=True)
class Verdict:
    equilibrates: bool
    witness: FairCycleWitness | None
    state_count: int
    scc_count: int
    elapsed: float

    @property
    def result(self) -> str:
        return "equilibrates" if self.equilibrates else "oscillates"


def _bfs_path_within(tg: TransitionGraph, allowed: set[int], src: int, dst: int) -> list[tuple[int, int]]:
    """Shortest (state, agent) edge list from src to dst using only allowed states."""
    if src == dst:
        return []
    n_agents, delta = tg.n_agents, tg.delta
    parent: dict[int, tuple[int, int] | None] = {src: None}
    frontier = [src]
    while frontier:
        nxt = []
        for s in frontier:
            base = s * n_agents
            for a in range(n_agents):
                w = delta[base + a]
                if w in allowed and w not in parent:
                    parent[w] = (s, a)
                    if w == dst:
                        edges = []
                        cur = dst
                        while parent[cur] is not None:
                            ps, pa = parent[cur]  # type: ignore[misc]
                            edges.append((ps, pa))
                            cur = ps
                        edges.reverse()
                        return edges
                    nxt.append(w)
        frontier = nxt
    raise RuntimeError("no path inside a strongly connected component")


def _build_witness(
    tg: TransitionGraph, component: list[int], qset: set[int], per_agent_src: list[int]
) -> FairCycleWitness:
    n_agents, delta = tg.n_agents, tg.delta
    start = per_agent_src[0]
    cur = start
    cycle: list[tuple[int, int]] = []
    for a in range(n_agents):
        cycle.extend(_bfs_path_within(tg, qset, cur, per_agent_src[a]))
        cycle.append((per_agent_src[a], a))
        cur = delta[per_agent_src[a] * n_agents + a]
    if len({s for s, _ in cycle} | {cur}) < 2:
        # Every per-agent edge was a self-loop at one state; route through a
        # second component state so the orbit genuinely oscillates.
        other = next(s for s in component if s != cur)
        cycle.extend(_bfs_path_within(tg, qset, cur, other))
        cur = other
    cycle.extend(_bfs_path_within(tg, qset, cur, start))
    schedule = EventuallyPeriodic(prefix=(), cycle=tuple(a for _, a in cycle))
    return FairCycleWitness(
        entry_path=(start,), entry_agents=(), cycle=tuple(cycle), schedule=schedule
    )


def find_fair_cycle(
    tg: TransitionGraph,
    restrict: set[int] | None = None,
    sccs: list[list[int]] | None = None,
) -> FairCycleWitness | None:
    """Search for an SCC witnessing non-equilibration (see module docstring).

    Returns None exactly when no component of >= 2 states gives every agent
    an internal edge.
    """
    if sccs is None:
        sccs = strongly_connected_components(tg, restrict)
    n_agents, delta = tg.n_agents, tg.delta
    for component in sccs:
        if len(component) < 2:
            continue
        qset = set(component)
        per_agent_src: list[int] = []
        for a in range(n_agents):
            src = -1
            for s in component:
                if delta[s * n_agents + a] in qset:
                    src = s
                    break
            if src < 0:
                break
            per_agent_src.append(src)
        if len(per_agent_src) == n_agents:
            return _build_witness(tg, component, qset, per_agent_src)
    return None


def replay_witness_table(tg: TransitionGraph, witness: FairCycleWitness, periods: int = 3) -> bool:
    """Replay a witness against the raw successor table (no instance needed)."""
    state = witness.entry_path[0]
    for agent, expected in zip(witness.entry_agents, witness.entry_path[1:]):
        state = tg.successor(state, agent)
        if state != expected:
            return False
    if state != witness.cycle[0][0]:
        return False
    for _ in range(periods):
        for s, a in witness.cycle:
            if state != s:
                return False
            state = tg.successor(state, a)
    return state == witness.cycle[0][0] and len(set(witness.cycle_states())) >= 2


def validate_witness(instance: Instance, witness: FairCycleWitness, periods: int = 3) -> None:
    """Replay a witness through the actual dynamics; raises if it does not hold.

    Checks that the induced schedule is persistent, that the orbit
    reproduces exactly for the requested number of periods, and that no
    state on the orbit is an equilibrium.
    """
    if not witness.schedule.is_persistent(instance.n):
        raise ValueError("witness schedule does not activate every agent in its cycle")
    bits = witness.entry_path[0]
    for agent, expected in zip(witness.entry_agents, witness.entry_path[1:]):
        bits = step_bits(instance, bits, agent)
        if bits != expected:
            raise ValueError("witness entry path does not replay through the dynamics")
    if bits != witness.cycle[0][0]:
        raise ValueError("witness entry path does not reach the cycle start")
    for _ in range(periods):
        for s, a in witness.cycle:
            if bits != s:
                raise ValueError("witness cycle does not replay through the dynamics")
            if is_equilibrium_bits(instance, bits):
                raise ValueError("witness cycle visits an equilibrium state")
            bits = step_bits(instance, bits, a)
    if bits != witness.cycle[0][0]:
        raise ValueError("witness cycle does not close")


def _reachable(tg: TransitionGraph, start: int) -> set[int]:
    seen = {start}
    frontier = deque([start])
    n_agents, delta = tg.n_agents, tg.delta
    while frontier:
        s = frontier.popleft()
        base = s * n_agents
        for a in range(n_agents):
            w = delta[base + a]
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return seen


def _entry_from(tg: TransitionGraph, initial: int, witness: FairCycleWitness) -> FairCycleWitness:
    target = witness.cycle[0][0]
    allowed = _reachable(tg, initial)
    edges = _bfs_path_within(tg, allowed, initial, target) if initial != target else []
    states = [initial]
    agents = []
    for s, a in edges:
        agents.append(a)
        states.append(tg.successor(s, a))
    schedule = EventuallyPeriodic(prefix=tuple(agents), cycle=witness.schedule.cycle)
    return FairCycleWitness(
        entry_path=tuple(states),
        entry_agents=tuple(agents),
        cycle=witness.cycle,
        schedule=schedule,
    )


def check_equilibration(
    instance: Instance,
    cap: int = DEFAULT_STATE_CAP,
    initial_state: StrategyState | None = None,
) -> Verdict:
    """Decide equilibration-under-all-persistent-schedules for one instance.

    By default the verdict quantifies over every initial state. Passing
    initial_state restricts the search to states reachable from it, and the
    returned witness (if any) carries an entry path from that state. Every
    oscillation witness is validated by replay through the dynamics before
    it is returned.
    """
    start = perf_counter()
    tg = build_transition_graph(instance, cap)
    restrict = None
    if initial_state is not None:
        restrict = _reachable(tg, initial_state.bits)
    sccs = strongly_connected_components(tg, restrict)
    witness = find_fair_cycle(tg, restrict=restrict, sccs=sccs)
    if witness is not None and initial_state is not None:
        witness = _entry_from(tg, initial_state.bits, witness)
    if witness is not None:
        validate_witness(instance, witness)
    return Verdict(
        equilibrates=witness is None,
        witness=witness,
        state_count=tg.n_states if restrict is None else len(restrict),
        scc_count=len(sccs),
        elapsed=perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# Instance generators for sweeps and the hunter
# ---------------------------------------------------------------------------


def random_payoff_matrix(rng: SplitMix64, lo: int = 0, hi: int = 5) -> PayoffMatrix:
    """Uniform draw over integer matrices in [lo, hi]^4 satisfying the
    opponent-coordination constraint (rejection sampling)."""
    while True:
        r, s, t, p = (rng.randint(lo, hi) for _ in range(4))
        if min(r, p) > max(t, s):
            return PayoffMatrix(r, s, t, p)


def rules_from_mask(mask: int, n: int) -> tuple[UpdateRule, ...]:
    """Bit i set means agent i imitates; clear means it best-responds."""
    return tuple(
        UpdateRule.IMITATOR if (mask >> i) & 1 else UpdateRule.BEST_RESPONDER
        for i in range(n)
    )


def iter_rule_assignments(n: int) -> Iterator[tuple[UpdateRule, ...]]:
    for mask in range(1 << n):
        yield rules_from_mask(mask, n)


def stratified_rule_assignments(
    n: int, count: int, rng: SplitMix64
) -> list[tuple[UpdateRule, ...]]:
    """All-best-responder and all-imitator first, then random mixes whose
    imitator counts sweep the ratios."""
    out = [rules_from_mask(0, n), rules_from_mask((1 << n) - 1, n)]
    while len(out) < count:
        k = rng.randint(1, n - 1)
        positions = list(range(n))
        rng.shuffle(positions)
        mask = 0
        for pos in positions[:k]:
            mask |= 1 << pos
        out.append(rules_from_mask(mask, n))
    return out[:count]


def build_instance(
    graph: Graph, rules: Sequence[UpdateRule], payoffs: Sequence[PayoffMatrix]
) -> Instance:
    return Instance(graph, tuple(AgentSpec(r, p) for r, p in zip(rules, payoffs)))


def iter_exhaustive_instances(
    graph: Graph,
    rng: SplitMix64,
    random_draws: int = 500,
    grid: Sequence[PayoffMatrix] = PAYOFF_GRID,
) -> Iterator[Instance]:
    """Every rule assignment crossed with the uniform grid matrices plus
    seeded heterogeneous random payoff draws."""
    n = graph.n
    for rules in iter_rule_assignments(n):
        for pm in grid:
            yield build_instance(graph, rules, [pm] * n)
        for _ in range(random_draws):
            yield build_instance(graph, rules, [random_payoff_matrix(rng) for _ in range(n)])


# ---------------------------------------------------------------------------
# Open-problem hunter (report-only)
# ---------------------------------------------------------------------------

HUNT_FAMILIES = ("dense-tree", "general", "sparse-tree", "starlike", "ring", "linear", "tree")

# Dense trees and small cyclic graphs are where the open problem lives, so
# they are enumerated first.
_FAMILY_PRIORITY = {name: i for i, name in enumerate(HUNT_FAMILIES)}


@dataclass(frozen=True)
class HuntRow:
    digest: str
    family: str
    n: int
    verdict: str
    state_count: int
    scc_count: int
    elapsed: float


@dataclass
class HuntReport:
    rows: list[HuntRow]
    witnesses: list[dict]
    skipped_too_large: int = 0
    interrupted: bool = False

    def oscillation_count(self) -> int:
        return len(self.witnesses)


def _state_str(bits: int, n: int) -> str:
    return "".join("B" if (bits >> i) & 1 else "A" for i in range(n))


def witness_to_dict(instance: Instance, witness: FairCycleWitness) -> dict:
    n = instance.n
    return {
        "instance": instance.canonical_dict(),
        "instance_digest": instance.digest(),
        "entry_path": [_state_str(s, n) for s in witness.entry_path],
        "entry_agents": [a + 1 for a in witness.entry_agents],
        "cycle": [[_state_str(s, n), a + 1] for s, a in witness.cycle],
        "schedule": witness.schedule.spec_dict(),
    }


def _graphs_for_family(family: str, max_n: int, rng: SplitMix64) -> list[Graph]:
    graphs: list[Graph] = []
    if family == "linear":
        graphs = [make_linear(n) for n in range(2, max_n + 1)]
    elif family == "ring":
        graphs = [make_ring(n) for n in range(3, max_n + 1)]
    elif family in ("tree", "sparse-tree", "dense-tree", "starlike"):
        wanted = {
            "tree": {"linear", "starlike", "sparse_tree", "dense_tree"},
            "sparse-tree": {"linear", "starlike", "sparse_tree"},
            "dense-tree": {"dense_tree"},
            "starlike": {"starlike"},
        }[family]
        for n in range(2, max_n + 1):
            for g in nonisomorphic_trees(n):
                if classify(g).value in wanted:
                    graphs.append(g)
    elif family == "general":
        # Small cyclic graphs: every ring with one chord, complete graphs,
        # and a few random connected graphs with extra edges per size.
        for n in range(4, max_n + 1):
            ring_edges = [(i, (i + 1) % n) for i in range(n)]
            for offset in range(2, n // 2 + 1):
                graphs.append(Graph.from_edges(n, ring_edges + [(0, offset)]))
        for n in range(3, min(max_n, 5) + 1):
            graphs.append(Graph.from_edges(n, list(itertools.combinations(range(n), 2))))
        for n in range(4, max_n + 1):
            for _ in range(3):
                base = [(i, (i + 1) % n) for i in range(n)]
                extra = set()
                for _ in range(rng.randint(1, max(1, n // 2))):
                    u = rng.randrange(n)
                    v = rng.randrange(n)
                    if u != v and (min(u, v), max(u, v)) not in {
                        (min(a, b), max(a, b)) for a, b in base
                    }:
                        extra.add((min(u, v), max(u, v)))
                graphs.append(Graph.from_edges(n, base + sorted(extra)))
    else:
        raise ValueError(f"unknown hunt family {family!r}; pick from {HUNT_FAMILIES}")
    return graphs


def _hunt_instance_payload(payload: dict) -> dict:
    """Worker entry point: verify one serialized instance (picklable I/O)."""
    instance = instance_from_dict(payload["instance"])
    try:
        verdict = check_equilibration(instance, cap=payload["cap"])
    except TooLarge:
        return {"digest": instance.digest(), "too_large": True}
    row = {
        "digest": instance.digest(),
        "family": payload["family"],
        "n": instance.n,
        "verdict": verdict.result,
        "state_count": verdict.state_count,
        "scc_count": verdict.scc_count,
        "elapsed": verdict.elapsed,
    }
    if verdict.witness is not None:
        row["witness"] = witness_to_dict(instance, verdict.witness)
    return row


def hunt(
    families: Sequence[str],
    max_n: int,
    seed: int,
    *,
    budget: int = 5000,
    cap: int = DEFAULT_STATE_CAP,
    grid: Sequence[PayoffMatrix] = PAYOFF_GRID,
    random_payoff_draws: int = 2,
    assignments_above_exhaustive: int = 16,
    workers: int = 1,
) -> HuntReport:
    """Sweep instances of the requested families through check_equilibration.

    Findings are data, not errors: every oscillation witness is recorded
    with full replay data and the report carries one row per instance.
    Instances beyond the state cap are counted and skipped. The sweep is
    deterministic in (families, max_n, seed, budget); rows are sorted
    before the report is returned.
    """
    ordered = sorted(set(families), key=lambda f: _FAMILY_PRIORITY.get(f, 99))
    rng = SplitMix64(derive_seed(seed, "hunt"))
    payloads: list[dict] = []
    for family in ordered:
        for graph in _graphs_for_family(family, max_n, rng):
            n = graph.n
            if n <= 6:
                assignments = list(iter_rule_assignments(n))
            else:
                assignments = stratified_rule_assignments(n, assignments_above_exhaustive, rng)
            for rules in assignments:
                configs = [[pm] * n for pm in grid]
                configs.extend(
                    [random_payoff_matrix(rng) for _ in range(n)]
                    for _ in range(random_payoff_draws)
                )
                for payoffs in configs:
                    if len(payloads) >= budget:
                        break
                    instance = build_instance(graph, rules, payoffs)
                    payloads.append(
                        {"instance": instance.canonical_dict(), "family": family, "cap": cap}
                    )

    # An interrupt (Ctrl-C) keeps whatever already finished so the caller
    # can flush a partial report.
    results: list[dict] = []
    interrupted = False
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_hunt_instance_payload, p) for p in payloads]
            try:
                for future in futures:
                    results.append(future.result())
            except KeyboardInterrupt:
                interrupted = True
                for future in futures:
                    future.cancel()
    else:
        try:
            for payload in payloads:
                results.append(_hunt_instance_payload(payload))
        except KeyboardInterrupt:
            interrupted = True

    rows = []
    witnesses = []
    skipped = 0
    for res in results:
        if res.get("too_large"):
            skipped += 1
            continue
        rows.append(
            HuntRow(
                digest=res["digest"],
                family=res["family"],
                n=res["n"],
                verdict=res["verdict"],
                state_count=res["state_count"],
                scc_count=res["scc_count"],
                elapsed=res["elapsed"],
            )
        )
        if "witness" in res:
            witnesses.append(res["witness"])
    rows.sort(key=lambda r: (r.family, r.n, r.digest))
    witnesses.sort(key=lambda w: w["instance_digest"])
    return HuntReport(
        rows=rows, witnesses=witnesses, skipped_too_large=skipped, interrupted=interrupted
    )


def hunt_rows_csv(report: HuntReport) -> str:
    lines = ["digest,family,n,verdict,state_count,scc_count,elapsed_s"]
    for r in report.rows:
        lines.append(
            f"{r.digest},{r.family},{r.n},{r.verdict},{r.state_count},{r.scc_count},"
            f"{r.elapsed:.6f}"
        )
    return "\n".join(lines) + "\n"
