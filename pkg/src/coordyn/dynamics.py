"""Activation schedules, the asynchronous run engine, and trace recording.

One agent activates per step. A run is a pure function of (instance,
initial state, schedule spec, seed): schedules draw randomness only from
the in-repo portable generator, so traces replay bit-for-bit.

Persistence (every agent activates infinitely often) cannot be observed on
a finite run; RoundRobin and RandomFair approximate it constructively.
RandomFair guarantees that every window of `window` consecutive steps
activates every agent: it draws uniformly but forcibly activates any agent
that would otherwise exceed its recurrence deadline. With window == n this
degenerates to a repeated random permutation, which is the only sequence
satisfying the sliding-window bound at that width.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import ConfigError, ScriptExhausted
from .game import (
    AgentSpec,
    Instance,
    PayoffMatrix,
    StrategyState,
    UpdateRule,
    is_equilibrium_bits,
    step_bits,
)
from .rng import SplitMix64
from .topology import Graph


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundRobin:
    """Agents 0..n-1 in cyclic order; persistent by construction."""

    def spec_dict(self) -> dict:
        return {"kind": "round_robin"}


@dataclass(frozen=True)
class RandomFair:
    """Seeded uniform draws with a bounded-recurrence override.

    Every agent appears in every window of `window` consecutive steps
    (window defaults to n and must be >= n). Persistent by construction.
    """

    seed: int
    window: int | None = None

    def spec_dict(self) -> dict:
        d: dict = {"kind": "random_fair", "seed": self.seed}
        if self.window is not None:
            d["window"] = self.window
        return d


@dataclass(frozen=True)
class EventuallyPeriodic:
    """Finite prefix followed by a repeated cycle of agent activations."""

    prefix: tuple[int, ...]
    cycle: tuple[int, ...]

    def __post_init__(self):
        if not self.cycle:
            raise ValueError("eventually periodic schedule needs a non-empty cycle")

    def is_persistent(self, n_agents: int) -> bool:
        """True iff the cycle activates every agent (prefix does not count)."""
        return set(self.cycle) >= set(range(n_agents))

    def spec_dict(self) -> dict:
        return {
            "kind": "eventually_periodic",
            "prefix": [a + 1 for a in self.prefix],
            "cycle": [a + 1 for a in self.cycle],
        }


@dataclass(frozen=True)
class Scripted:
    """Fixed finite activation list; useful for replays and worked examples."""

    agents: tuple[int, ...]

    def spec_dict(self) -> dict:
        return {"kind": "scripted", "agents": [a + 1 for a in self.agents]}


Schedule = Union[RoundRobin, RandomFair, EventuallyPeriodic, Scripted]


def schedule_from_dict(d: dict) -> Schedule:
    """Parse the external (1-based) schedule spec."""
    kind = d.get("kind")
    if kind == "round_robin":
        return RoundRobin()
    if kind == "random_fair":
        if "seed" not in d:
            raise ConfigError("random_fair schedule needs a seed", field="schedule.seed")
        return RandomFair(seed=int(d["seed"]), window=d.get("window"))
    if kind == "eventually_periodic":
        return EventuallyPeriodic(
            prefix=tuple(a - 1 for a in d.get("prefix", [])),
            cycle=tuple(a - 1 for a in d.get("cycle", [])),
        )
    if kind == "scripted":
        return Scripted(agents=tuple(a - 1 for a in d.get("agents", [])))
    raise ConfigError(f"unknown schedule kind {kind!r}", field="schedule.kind")


class ActivationSource:
    """Stateful activation stream for one run. Call next_activation(t) with
    consecutive t starting at 0."""

    def __init__(self, n_agents: int):
        self.n_agents = n_agents
        self._t = 0

    def _advance(self, t: int) -> None:
        if t != self._t:
            raise ValueError(f"activations must be drawn sequentially (expected t={self._t})")
        self._t += 1

    def next_activation(self, t: int) -> int:
        raise NotImplementedError


class _RoundRobinSource(ActivationSource):
    def next_activation(self, t: int) -> int:
        self._advance(t)
        return t % self.n_agents


class _RandomFairSource(ActivationSource):
    def __init__(self, schedule: RandomFair, n_agents: int):
        super().__init__(n_agents)
        self.window = schedule.window if schedule.window is not None else n_agents
        if self.window < n_agents:
            raise ValueError(
                f"random_fair window {self.window} must be >= number of agents {n_agents}"
            )
        self._rng = SplitMix64(schedule.seed)
        # Virtual initial activation times: distinct, so at most one agent
        # ever reaches its recurrence deadline on a given step.
        order = list(range(n_agents))
        self._rng.shuffle(order)
        self._last = [0] * n_agents
        for position, agent in enumerate(order):
            self._last[agent] = position - self.window

    def next_activation(self, t: int) -> int:
        self._advance(t)
        pick = -1
        for agent in range(self.n_agents):
            if self._last[agent] + self.window <= t:
                pick = agent
                break
        if pick < 0:
            pick = self._rng.randrange(self.n_agents)
        self._last[pick] = t
        return pick


class _EventuallyPeriodicSource(ActivationSource):
    def __init__(self, schedule: EventuallyPeriodic, n_agents: int):
        super().__init__(n_agents)
        self.schedule = schedule

    def next_activation(self, t: int) -> int:
        self._advance(t)
        prefix, cycle = self.schedule.prefix, self.schedule.cycle
        if t < len(prefix):
            return prefix[t]
        return cycle[(t - len(prefix)) % len(cycle)]


class _ScriptedSource(ActivationSource):
    def __init__(self, schedule: Scripted, n_agents: int):
        super().__init__(n_agents)
        self.schedule = schedule

    def next_activation(self, t: int) -> int:
        self._advance(t)
        if t >= len(self.schedule.agents):
            raise ScriptExhausted(f"script has {len(self.schedule.agents)} steps, asked for t={t}")
        return self.schedule.agents[t]


def make_source(schedule: Schedule, n_agents: int) -> ActivationSource:
    if isinstance(schedule, RoundRobin):
        return _RoundRobinSource(n_agents)
    if isinstance(schedule, RandomFair):
        return _RandomFairSource(schedule, n_agents)
    if isinstance(schedule, EventuallyPeriodic):
        return _EventuallyPeriodicSource(schedule, n_agents)
    if isinstance(schedule, Scripted):
        return _ScriptedSource(schedule, n_agents)
    raise TypeError(f"not a schedule: {schedule!r}")


def next_activation(schedule: Schedule, t: int, n_agents: int) -> int:
    """Activation at step t for schedules that are pure functions of t.

    RandomFair is stateful; use make_source for it.
    """
    if isinstance(schedule, RandomFair):
        raise ValueError("random_fair activations are stateful; use make_source()")
    src = make_source(schedule, n_agents)
    for step_t in range(t):
        src.next_activation(step_t)
    return src.next_activation(t)


# ---------------------------------------------------------------------------
# Stepping and traces
# ---------------------------------------------------------------------------


DEFAULT_BUDGET_PER_AGENT = 10_000


@dataclass(frozen=True)
class Equilibrated:
    at_time: int

    def as_dict(self) -> dict:
        return {"kind": "equilibrated", "at_time": self.at_time}


@dataclass(frozen=True)
class RepetitionDetected:
    """A (state, cycle-position) pair recurred under an eventually periodic
    schedule, certifying an infinite periodic continuation."""

    period_start: int
    period_length: int

    def as_dict(self) -> dict:
        return {
            "kind": "repetition_detected",
            "period_start": self.period_start,
            "period_length": self.period_length,
        }


@dataclass(frozen=True)
class BudgetExhausted:
    def as_dict(self) -> dict:
        return {"kind": "budget_exhausted"}


Outcome = Union[Equilibrated, RepetitionDetected, BudgetExhausted]


def outcome_from_dict(d: dict) -> Outcome:
    kind = d.get("kind")
    if kind == "equilibrated":
        return Equilibrated(at_time=int(d["at_time"]))
    if kind == "repetition_detected":
        return RepetitionDetected(
            period_start=int(d["period_start"]), period_length=int(d["period_length"])
        )
    if kind == "budget_exhausted":
        return BudgetExhausted()
    raise ConfigError(f"unknown outcome kind {kind!r}", field="outcome.kind")


@dataclass(frozen=True)
class TraceEvent:
    t: int
    agent: int
    state_bits: int  # state at time t+1, after the update
    changed: bool


@dataclass
class Trace:
    """Time-ordered record of one run; the evidence all monitors replay."""

    instance: Instance
    initial: StrategyState
    schedule: Schedule
    budget: int
    events: list[TraceEvent] = field(default_factory=list)
    outcome: Outcome = field(default_factory=BudgetExhausted)

    def state_bits_at(self, t: int) -> int:
        """State at time t (0 = initial; event k yields the state at k+1)."""
        if t == 0:
            return self.initial.bits
        return self.events[t - 1].state_bits

    def final_bits(self) -> int:
        return self.events[-1].state_bits if self.events else self.initial.bits

    def final_state(self) -> StrategyState:
        return StrategyState(self.final_bits(), self.instance.n)

    def states(self) -> Iterator[int]:
        yield self.initial.bits
        for ev in self.events:
            yield ev.state_bits


def step(instance: Instance, state: StrategyState, agent: int) -> tuple[StrategyState, bool]:
    """Activate one agent; returns the successor state and whether it changed."""
    new_bits = step_bits(instance, state.bits, agent)
    return StrategyState(new_bits, instance.n), new_bits != state.bits


def run(
    instance: Instance,
    initial: StrategyState,
    schedule: Schedule,
    budget: int | None = None,
) -> Trace:
    """Iterate the dynamics until equilibrium, repetition, or budget end.

    Equilibrium is verified with a full per-agent scan, performed lazily
    after steps that leave the state unchanged (a state that just became an
    equilibrium is caught at the next step; semantics are unaffected).
    Repetition detection applies to eventually periodic schedules only: a
    repeated (state, cycle-position) pair proves the run continues
    periodically forever. Scripted schedules are clamped to their script
    length and report BudgetExhausted if the script ends first.
    """
    if initial.n != instance.n:
        raise ValueError(f"state has {initial.n} agents, instance has {instance.n}")
    if budget is None:
        budget = DEFAULT_BUDGET_PER_AGENT * instance.n
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if isinstance(schedule, Scripted):
        budget = min(budget, len(schedule.agents))

    trace = Trace(instance, initial, schedule, budget)
    if is_equilibrium_bits(instance, initial.bits):
        trace.outcome = Equilibrated(at_time=0)
        return trace

    source = make_source(schedule, instance.n)
    periodic = schedule if isinstance(schedule, EventuallyPeriodic) else None
    seen: dict[tuple[int, int], int] = {}
    bits = initial.bits
    for t in range(budget):
        if periodic is not None and t >= len(periodic.prefix):
            pos = (t - len(periodic.prefix)) % len(periodic.cycle)
            earlier = seen.get((bits, pos))
            if earlier is not None:
                trace.outcome = RepetitionDetected(
                    period_start=earlier, period_length=t - earlier
                )
                return trace
            seen[(bits, pos)] = t
        agent = source.next_activation(t)
        new_bits = step_bits(instance, bits, agent)
        changed = new_bits != bits
        trace.events.append(TraceEvent(t, agent, new_bits, changed))
        bits = new_bits
        if not changed and is_equilibrium_bits(instance, bits):
            trace.outcome = Equilibrated(at_time=t + 1)
            return trace
    trace.outcome = BudgetExhausted()
    return trace


# ---------------------------------------------------------------------------
# Hashing and JSONL interchange
# ---------------------------------------------------------------------------


def _state_str(bits: int, n: int) -> str:
    return "".join("B" if (bits >> i) & 1 else "A" for i in range(n))


def trace_hash(trace: Trace) -> str:
    """Stable digest of (instance canonical form, schedule spec, events, outcome).

    Identical inputs and seeds give identical digests; no timestamps or
    other environment data enter the hash.
    """
    n = trace.instance.n
    payload = {
        "instance": trace.instance.canonical_dict(),
        "schedule": trace.schedule.spec_dict(),
        "initial": _state_str(trace.initial.bits, n),
        "events": [
            [ev.t, ev.agent + 1, _state_str(ev.state_bits, n), ev.changed]
            for ev in trace.events
        ],
        "outcome": trace.outcome.as_dict(),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_trace_jsonl(trace: Trace, fp) -> None:
    """One JSON object per line: header, then events, then an outcome footer.

    The header embeds the full instance definition (not just its digest) so
    an analyzer can replay the trace from the file alone. Agent ids are
    1-based in the file.
    """
    n = trace.instance.n
    header = {
        "schema": 1,
        "instance": trace.instance.canonical_dict(),
        "instance_digest": trace.instance.digest(),
        "schedule": trace.schedule.spec_dict(),
        "initial_state": _state_str(trace.initial.bits, n),
        "budget": trace.budget,
    }
    fp.write(json.dumps(header, sort_keys=True) + "\n")
    for ev in trace.events:
        fp.write(
            json.dumps(
                {
                    "t": ev.t,
                    "agent": ev.agent + 1,
                    "state": _state_str(ev.state_bits, n),
                    "changed": ev.changed,
                },
                sort_keys=True,
            )
            + "\n"
        )
    footer = {"outcome": trace.outcome.as_dict(), "trace_hash": trace_hash(trace)}
    fp.write(json.dumps(footer, sort_keys=True) + "\n")


def instance_from_dict(d: dict) -> Instance:
    """Rebuild an Instance from its canonical (1-based) description."""
    try:
        n = int(d["n"])
        edges = [(int(u) - 1, int(v) - 1) for u, v in d["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad instance description: {exc}", field="instance") from exc
    graph = Graph.from_edges(n, edges)
    agents = []
    for idx, spec in enumerate(d.get("agents", [])):
        try:
            rule = UpdateRule(spec["rule"])
            r, s, t, p = (int(x) for x in spec["payoff"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(
                f"bad agent spec: {exc}", field=f"instance.agents[{idx}]"
            ) from exc
        agents.append(AgentSpec(rule, PayoffMatrix(r, s, t, p)))
    return Instance(graph, tuple(agents))


def read_trace_jsonl(fp) -> Trace:
    """Parse a trace file back into a Trace (instance reconstructed inline)."""
    lines = [json.loads(line) for line in fp if line.strip()]
    if len(lines) < 2:
        raise ConfigError("trace file needs at least a header and a footer")
    header, *middle = lines
    if header.get("schema") != 1:
        raise ConfigError(f"unsupported trace schema {header.get('schema')!r}", field="schema")
    footer = middle.pop()
    if "outcome" not in footer:
        raise ConfigError("trace file is missing its outcome footer")
    instance = instance_from_dict(header["instance"])
    schedule = schedule_from_dict(header["schedule"])
    initial = StrategyState.from_string(header["initial_state"])
    events = []
    for row in middle:
        state = StrategyState.from_string(row["state"])
        events.append(
            TraceEvent(
                t=int(row["t"]),
                agent=int(row["agent"]) - 1,
                state_bits=state.bits,
                changed=bool(row["changed"]),
            )
        )
    trace = Trace(
        instance=instance,
        initial=initial,
        schedule=schedule,
        budget=int(header.get("budget", 0)),
        events=events,
        outcome=outcome_from_dict(footer["outcome"]),
    )
    return trace
