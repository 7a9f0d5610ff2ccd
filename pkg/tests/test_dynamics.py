"""Schedules, the run engine, trace invariants, hashing, and JSONL round trips."""

import io

import pytest

from coordyn.dynamics import (
    BudgetExhausted,
    Equilibrated,
    EventuallyPeriodic,
    RandomFair,
    RepetitionDetected,
    RoundRobin,
    Scripted,
    Trace,
    TraceEvent,
    make_source,
    next_activation,
    read_trace_jsonl,
    run,
    schedule_from_dict,
    step,
    trace_hash,
    write_trace_jsonl,
)
from coordyn.errors import ScriptExhausted
from coordyn.game import (
    PayoffMatrix,
    Strategy,
    StrategyState,
    UpdateRule,
    is_equilibrium,
    step_bits,
    uniform_instance,
)
from coordyn.rng import SplitMix64
from coordyn.topology import Graph, make_linear, make_starlike

from helpers import mk_instance, oracle_update, random_instance


def st(text: str) -> StrategyState:
    return StrategyState.from_string(text)


FIG1_INSTANCE = uniform_instance(
    make_linear(8), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1)
)
FIG1_STATE = st("ABAAABBA")


class TestActivationSources:
    def test_round_robin(self):
        assert [next_activation(RoundRobin(), t, 3) for t in range(4)] == [0, 1, 2, 0]

    def test_eventually_periodic(self):
        sched = EventuallyPeriodic(prefix=(1,), cycle=(0, 2))
        assert [next_activation(sched, t, 3) for t in range(5)] == [1, 0, 2, 0, 2]

    def test_empty_cycle_rejected(self):
        with pytest.raises(ValueError):
            EventuallyPeriodic(prefix=(), cycle=())

    def test_persistence_flag(self):
        assert EventuallyPeriodic((), (0, 1, 2)).is_persistent(3)
        assert not EventuallyPeriodic((2,), (0, 1)).is_persistent(3)

    def test_scripted_lookup_and_exhaustion(self):
        sched = Scripted((2, 0, 1))
        src = make_source(sched, 3)
        assert [src.next_activation(t) for t in range(3)] == [2, 0, 1]
        with pytest.raises(ScriptExhausted):
            src.next_activation(3)

    def test_sequential_access_enforced(self):
        src = make_source(RoundRobin(), 3)
        src.next_activation(0)
        with pytest.raises(ValueError):
            src.next_activation(5)

    def test_random_fair_needs_source(self):
        with pytest.raises(ValueError):
            next_activation(RandomFair(seed=1), 0, 3)

    def test_random_fair_window_below_n_rejected(self):
        with pytest.raises(ValueError):
            make_source(RandomFair(seed=1, window=2), 4)


class TestRandomFairWindow:
    def window_covers_all(self, n: int, window: int, draws: int = 10_000) -> None:
        src = make_source(RandomFair(seed=123, window=window), n)
        seq = [src.next_activation(t) for t in range(draws)]
        for start in range(draws - window + 1):
            assert set(seq[start : start + window]) == set(range(n)), f"window at {start}"

    def test_window_equals_n(self):
        self.window_covers_all(5, 5)

    def test_window_twice_n(self):
        self.window_covers_all(5, 10)

    def test_default_window_is_n(self):
        src = make_source(RandomFair(seed=9), 4)
        seq = [src.next_activation(t) for t in range(400)]
        for start in range(0, 396):
            assert set(seq[start : start + 4]) == set(range(4))

    def test_seed_determinism(self):
        a = make_source(RandomFair(seed=7, window=6), 4)
        b = make_source(RandomFair(seed=7, window=6), 4)
        assert [a.next_activation(t) for t in range(200)] == [
            b.next_activation(t) for t in range(200)
        ]


class TestStep:
    def test_merge_step(self):
        inst = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        new, changed = step(inst, st("ABA"), 1)
        assert changed and new == st("AAA")
        assert oracle_update(inst, "ABA", 1) == "A"

    def test_equilibrium_step_is_identity(self):
        inst = FIG1_INSTANCE
        for agent in range(8):
            new, changed = step(inst, st("AAAAAAAA"), agent)
            assert not changed and new == st("AAAAAAAA")

    def test_non_border_activation_is_identity(self):
        new, changed = step(FIG1_INSTANCE, FIG1_STATE, 3)  # agent 4, non-border
        assert not changed and new == FIG1_STATE


class TestRun:
    def test_fig1_round_robin_equilibrates(self):
        trace = run(FIG1_INSTANCE, FIG1_STATE, RoundRobin(), budget=10_000)
        assert isinstance(trace.outcome, Equilibrated)
        assert is_equilibrium(FIG1_INSTANCE, trace.final_state())

    def test_initial_equilibrium_is_time_zero(self):
        trace = run(FIG1_INSTANCE, st("BBBBBBBB"), RoundRobin())
        assert trace.outcome == Equilibrated(at_time=0) and trace.events == []

    def test_budget_one_on_unsettled_start(self):
        trace = run(FIG1_INSTANCE, FIG1_STATE, RoundRobin(), budget=1)
        assert isinstance(trace.outcome, BudgetExhausted)

    def test_persistent_periodic_cycle_equilibrates(self):
        # A cycle naming every agent is a persistent schedule; on trees it
        # must reach equilibrium rather than a repetition.
        inst = mk_instance(make_starlike([2, 2, 1]), "bibibi", (3, 1, 0, 2))
        sched = EventuallyPeriodic(prefix=(), cycle=(3, 0, 5, 1, 4, 2))
        assert sched.is_persistent(6)
        trace = run(inst, st("ABABAB"), sched, budget=5000)
        assert isinstance(trace.outcome, Equilibrated)

    def test_repetition_on_non_persistent_cycle(self):
        # Only agent 0 ever activates; agent 2 stays unsatisfied forever, so
        # the run certifies an infinite non-equilibrium repetition.
        inst = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        sched = EventuallyPeriodic(prefix=(), cycle=(0,))
        trace = run(inst, st("ABA"), sched, budget=100)
        assert isinstance(trace.outcome, RepetitionDetected)
        assert not is_equilibrium(inst, trace.final_state())

    def test_repetition_replay_soundness(self):
        inst = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        sched = EventuallyPeriodic(prefix=(), cycle=(0,))
        trace = run(inst, st("ABA"), sched, budget=100)
        out = trace.outcome
        start, length = out.period_start, out.period_length
        states = list(trace.states())
        bits = states[start]
        for k in range(2 * length):  # replay two periods
            agent = next_activation(sched, start + (k % length), 3)
            bits = step_bits(inst, bits, agent)
            assert bits == states[start + (k % length) + 1]

    def test_single_site_change_invariant(self):
        rng = SplitMix64(31)
        for _ in range(40):
            inst = random_instance(rng, n_lo=3, n_hi=9)
            initial = StrategyState.random(inst.n, rng)
            trace = run(inst, initial, RandomFair(seed=rng.next_u64()), budget=500)
            prev = initial.bits
            for ev in trace.events:
                diff = prev ^ ev.state_bits
                assert diff & ~(1 << ev.agent) == 0
                assert bool(diff) == ev.changed
                prev = ev.state_bits
            if isinstance(trace.outcome, Equilibrated):
                assert is_equilibrium(inst, trace.final_state())

    def test_scripted_run_clamps_to_script(self):
        trace = run(FIG1_INSTANCE, FIG1_STATE, Scripted((0, 1)), budget=100)
        assert len(trace.events) == 2
        assert isinstance(trace.outcome, BudgetExhausted)

    def test_determinism_same_seed(self):
        inst = mk_instance(make_starlike([2, 2, 2]), "bibibib", (3, 1, 0, 2))
        initial = st("ABABABA")
        t1 = run(inst, initial, RandomFair(seed=42), budget=2000)
        t2 = run(inst, initial, RandomFair(seed=42), budget=2000)
        assert t1.events == t2.events and t1.outcome == t2.outcome
        assert trace_hash(t1) == trace_hash(t2)

    def test_different_seeds_generally_differ(self):
        inst = mk_instance(make_starlike([2, 2, 2]), "bibibib", (3, 1, 0, 2))
        initial = st("ABABABA")
        t1 = run(inst, initial, RandomFair(seed=1), budget=2000)
        t2 = run(inst, initial, RandomFair(seed=2), budget=2000)
        assert trace_hash(t1) != trace_hash(t2)


class TestTraceHashAndJsonl:
    def test_round_trip(self):
        trace = run(FIG1_INSTANCE, FIG1_STATE, RoundRobin(), budget=10_000)
        buf = io.StringIO()
        write_trace_jsonl(trace, buf)
        buf.seek(0)
        loaded = read_trace_jsonl(buf)
        assert loaded.instance.digest() == trace.instance.digest()
        assert loaded.events == trace.events
        assert loaded.outcome == trace.outcome
        assert loaded.initial == trace.initial
        assert trace_hash(loaded) == trace_hash(trace)

    def test_hash_covers_schedule_and_events(self):
        t1 = run(FIG1_INSTANCE, FIG1_STATE, RoundRobin(), budget=10_000)
        t2 = run(FIG1_INSTANCE, FIG1_STATE, EventuallyPeriodic((), tuple(range(8))), budget=10_000)
        assert trace_hash(t1) != trace_hash(t2)  # same orbit, different schedule spec

    def test_no_isomorphism_canonicalization(self):
        a = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        scrambled = Graph.from_edges(3, [(1, 0), (0, 2)])  # path 1-0-2
        b = uniform_instance(scrambled, UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        assert a.digest() != b.digest()

    def test_forged_trace_hashable(self):
        inst = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = Trace(
            instance=inst,
            initial=st("AAA"),
            schedule=Scripted((1,)),
            budget=1,
            events=[TraceEvent(0, 1, st("ABA").bits, True)],
            outcome=BudgetExhausted(),
        )
        assert len(trace_hash(trace)) == 64

    def test_schedule_dict_round_trip(self):
        for sched in (
            RoundRobin(),
            RandomFair(seed=5, window=8),
            EventuallyPeriodic((1,), (0, 2)),
            Scripted((0, 1, 2)),
        ):
            assert schedule_from_dict(sched.spec_dict()) == sched


class TestStrategyRoundTrip:
    def test_strategy_enum(self):
        assert Strategy.from_char("A") is Strategy.A
        assert Strategy.from_bit(1) is Strategy.B
        with pytest.raises(ValueError):
            Strategy.from_char("C")
