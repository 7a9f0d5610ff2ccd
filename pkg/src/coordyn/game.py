"""Domain types and update rules for networked coordination games.

Each agent plays a 2x2 coordination game against every neighbor and earns
the sum of the per-neighbor payoffs. Payoffs are exact integers on purpose:
the no-switch tie rule needs exact equality, which floating point cannot
give. An agent is either a best-responder (picks the strategy maximizing
its own summed payoff against the neighbors' current strategies) or an
imitator (copies the strategy of a highest-earning neighbor, never
consulting its own earnings). In both rules, if strategies A and B both
attain the maximum, the agent keeps its current strategy.

States are stored compactly: bit i of an int is agent i's strategy, with
A = 0 and B = 1. The module-level operations accept StrategyState values;
the `*_bits` variants work on raw ints and are the hot path shared by the
simulator and the exhaustive verifier, so both always apply identical
semantics.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

from .errors import ConstraintViolated, InvalidAgent, IsolatedAgent, WrongRule
from .rng import SplitMix64
from .topology import Graph


class Strategy(Enum):
    A = 0
    B = 1

    @property
    def bit(self) -> int:
        return self.value

    def complement(self) -> "Strategy":
        return Strategy.B if self is Strategy.A else Strategy.A

    @staticmethod
    def from_bit(bit: int) -> "Strategy":
        return Strategy.B if bit else Strategy.A

    @staticmethod
    def from_char(ch: str) -> "Strategy":
        if ch == "A":
            return Strategy.A
        if ch == "B":
            return Strategy.B
        raise ValueError(f"strategy must be 'A' or 'B', got {ch!r}")

    def __str__(self) -> str:
        return self.name


class UpdateRule(Enum):
    BEST_RESPONDER = "best_responder"
    IMITATOR = "imitator"


@dataclass(frozen=True)
class PayoffMatrix:
    """Opponent-coordination 2x2 payoff matrix.

    r, s, t, p are the row player's payoffs for strategy pairs (A,A),
    (A,B), (B,A), (B,B). Validity requires min(r, p) > max(t, s) strictly,
    which makes matching a switching neighbor always weakly attractive.
    """

    r: int
    s: int
    t: int
    p: int

    def __post_init__(self):
        for name, value in (("r", self.r), ("s", self.s), ("t", self.t), ("p", self.p)):
            if not isinstance(value, int):
                raise ConstraintViolated(f"payoff {name} must be an integer, got {value!r}")
        if min(self.r, self.p) <= max(self.t, self.s):
            raise ConstraintViolated(
                f"need min(r, p) > max(t, s): min({self.r}, {self.p}) = "
                f"{min(self.r, self.p)} is not > max({self.t}, {self.s}) = "
                f"{max(self.t, self.s)}"
            )

    def payoff(self, own: Strategy, other: Strategy) -> int:
        if own is Strategy.A:
            return self.r if other is Strategy.A else self.s
        return self.t if other is Strategy.A else self.p

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.r, self.s, self.t, self.p)


def validate_payoff(r: int, s: int, t: int, p: int) -> PayoffMatrix:
    """Validate the opponent-coordination inequality; raises ConstraintViolated."""
    return PayoffMatrix(r, s, t, p)


@dataclass(frozen=True)
class AgentSpec:
    rule: UpdateRule
    payoff: PayoffMatrix


@dataclass(frozen=True)
class StrategyState:
    """Length-n strategy vector packed one bit per agent (A=0, B=1)."""

    bits: int
    n: int

    def __post_init__(self):
        if self.n < 0 or self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"bits 0x{self.bits:x} out of range for n={self.n}")

    @staticmethod
    def from_string(text: str) -> "StrategyState":
        bits = 0
        for i, ch in enumerate(text):
            if ch == "B":
                bits |= 1 << i
            elif ch != "A":
                raise ValueError(f"state characters must be A or B, got {ch!r}")
        return StrategyState(bits, len(text))

    @staticmethod
    def uniform(strategy: Strategy, n: int) -> "StrategyState":
        return StrategyState(((1 << n) - 1) if strategy is Strategy.B else 0, n)

    @staticmethod
    def random(n: int, rng: SplitMix64) -> "StrategyState":
        return StrategyState(rng.getrandbits(n), n)

    def of(self, agent: int) -> Strategy:
        if not 0 <= agent < self.n:
            raise InvalidAgent(f"agent {agent} out of range 0..{self.n - 1}")
        return Strategy.from_bit((self.bits >> agent) & 1)

    def with_strategy(self, agent: int, strategy: Strategy) -> "StrategyState":
        if not 0 <= agent < self.n:
            raise InvalidAgent(f"agent {agent} out of range 0..{self.n - 1}")
        mask = 1 << agent
        bits = (self.bits | mask) if strategy is Strategy.B else (self.bits & ~mask)
        return StrategyState(bits, self.n)

    def to_string(self) -> str:
        return "".join("B" if (self.bits >> i) & 1 else "A" for i in range(self.n))

    def __str__(self) -> str:
        return self.to_string()


@dataclass(frozen=True)
class Instance:
    """Immutable problem definition: a connected graph plus per-agent specs.

    Derived lookup tables (neighbor bitmasks, payoff rows, rule flags) are
    cached on first use; they are what make the bit-level operations cheap
    enough for exhaustive 2^n sweeps.
    """

    graph: Graph
    agents: tuple[AgentSpec, ...]

    def __post_init__(self):
        if len(self.agents) != self.graph.n:
            raise ValueError(
                f"{len(self.agents)} agent specs for a graph of {self.graph.n} nodes"
            )

    @property
    def n(self) -> int:
        return self.graph.n

    @cached_property
    def neighbor_masks(self) -> tuple[int, ...]:
        return self.graph.neighbor_masks

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(self.graph.degree(v) for v in range(self.n))

    @cached_property
    def payoff_rows(self) -> tuple[tuple[int, int, int, int], ...]:
        return tuple(spec.payoff.as_tuple() for spec in self.agents)

    @cached_property
    def imitator_flags(self) -> tuple[bool, ...]:
        return tuple(spec.rule is UpdateRule.IMITATOR for spec in self.agents)

    def canonical_dict(self) -> dict:
        """Canonical JSON-ready description (1-based edges) used for digests."""
        return {
            "n": self.n,
            "edges": [[u + 1, v + 1] for u, v in self.graph.edges()],
            "agents": [
                {"rule": spec.rule.value, "payoff": list(spec.payoff.as_tuple())}
                for spec in self.agents
            ],
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def uniform_instance(graph: Graph, rule: UpdateRule, payoff: PayoffMatrix) -> Instance:
    """Instance where every agent shares one rule and one payoff matrix."""
    return Instance(graph, tuple(AgentSpec(rule, payoff) for _ in range(graph.n)))


def _check_agent(instance: Instance, agent: int) -> None:
    if not 0 <= agent < instance.n:
        raise InvalidAgent(f"agent {agent} out of range 0..{instance.n - 1}")


# ---------------------------------------------------------------------------
# Bit-level core (single implementation of the rules, shared by all callers)
# ---------------------------------------------------------------------------


def utility_bits(instance: Instance, bits: int, agent: int) -> int:
    """Summed payoff of `agent` against all neighbors at state `bits`."""
    r, s, t, p = instance.payoff_rows[agent]
    b = (bits & instance.neighbor_masks[agent]).bit_count()
    a = instance.degrees[agent] - b
    if (bits >> agent) & 1:
        return t * a + p * b
    return r * a + s * b


def best_response_bit(instance: Instance, bits: int, agent: int) -> int:
    """Strategy bit maximizing the agent's utility; ties keep the current bit."""
    r, s, t, p = instance.payoff_rows[agent]
    b = (bits & instance.neighbor_masks[agent]).bit_count()
    a = instance.degrees[agent] - b
    ua = r * a + s * b
    ub = t * a + p * b
    if ua > ub:
        return 0
    if ub > ua:
        return 1
    return (bits >> agent) & 1


def imitation_bit(instance: Instance, bits: int, agent: int) -> int:
    """Strategy bit of a maximum-utility neighbor.

    Only neighbors compete (the agent's own utility is never considered).
    If both strategies are played by maximum-utility neighbors, the agent
    keeps its current bit; equal-utility neighbors sharing one strategy are
    not a tie.
    """
    nbrs = instance.graph.adjacency[agent]
    if not nbrs:
        raise IsolatedAgent(f"agent {agent} has no neighbors to imitate")
    payoff_rows = instance.payoff_rows
    masks = instance.neighbor_masks
    degrees = instance.degrees
    best = None
    present = 0  # bit 0: an A-playing neighbor attains the max; bit 1: a B-player does
    for j in nbrs:
        r, s, t, p = payoff_rows[j]
        bj = (bits & masks[j]).bit_count()
        aj = degrees[j] - bj
        if (bits >> j) & 1:
            uj = t * aj + p * bj
            flag = 2
        else:
            uj = r * aj + s * bj
            flag = 1
        if best is None or uj > best:
            best = uj
            present = flag
        elif uj == best:
            present |= flag
    if present == 3:
        return (bits >> agent) & 1
    return present >> 1


def update_bit(instance: Instance, bits: int, agent: int) -> int:
    """Dispatch to the agent's rule; returns the post-update strategy bit."""
    if instance.imitator_flags[agent]:
        return imitation_bit(instance, bits, agent)
    return best_response_bit(instance, bits, agent)


def step_bits(instance: Instance, bits: int, agent: int) -> int:
    """Full successor state when `agent` activates at `bits`."""
    new_bit = update_bit(instance, bits, agent)
    if new_bit:
        return bits | (1 << agent)
    return bits & ~(1 << agent)


def is_equilibrium_bits(instance: Instance, bits: int) -> bool:
    for agent in range(instance.n):
        if update_bit(instance, bits, agent) != (bits >> agent) & 1:
            return False
    return True


# ---------------------------------------------------------------------------
# Typed operations
# ---------------------------------------------------------------------------


def utility(instance: Instance, state: StrategyState, agent: int) -> int:
    _check_agent(instance, agent)
    return utility_bits(instance, state.bits, agent)


def best_response_target(instance: Instance, state: StrategyState, agent: int) -> Strategy:
    _check_agent(instance, agent)
    if instance.agents[agent].rule is not UpdateRule.BEST_RESPONDER:
        raise WrongRule(f"agent {agent} is not a best-responder")
    return Strategy.from_bit(best_response_bit(instance, state.bits, agent))


def imitation_target(instance: Instance, state: StrategyState, agent: int) -> Strategy:
    _check_agent(instance, agent)
    if instance.agents[agent].rule is not UpdateRule.IMITATOR:
        raise WrongRule(f"agent {agent} is not an imitator")
    return Strategy.from_bit(imitation_bit(instance, state.bits, agent))


def update(instance: Instance, state: StrategyState, agent: int) -> Strategy:
    """The strategy `agent` adopts when activated. Pure and deterministic."""
    _check_agent(instance, agent)
    return Strategy.from_bit(update_bit(instance, state.bits, agent))


def is_equilibrium(instance: Instance, state: StrategyState) -> bool:
    """True iff no agent would change strategy when activated.

    Updates are deterministic, so this per-agent fixed-point check is
    equivalent to invariance under every activation sequence.
    """
    return is_equilibrium_bits(instance, state.bits)
