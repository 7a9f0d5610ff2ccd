"""Sections, borders, and the four trace monitors (engine and forged traces)."""

import pytest

from coordyn.analysis import (
    analyze,
    borders,
    interior_section_count,
    ring_section_count,
    section_count,
    sections,
    series_csv,
)
from coordyn.dynamics import (
    BudgetExhausted,
    Equilibrated,
    RoundRobin,
    Scripted,
    Trace,
    TraceEvent,
    run,
)
from coordyn.errors import PathTooShort
from coordyn.game import (
    PayoffMatrix,
    StrategyState,
    UpdateRule,
    step_bits,
    uniform_instance,
)
from coordyn.rng import SplitMix64
from coordyn.topology import (
    Graph,
    admitted_linear_paths,
    make_linear,
    make_ring,
    make_starlike,
)
from coordyn.verifier import (
    PAYOFF_GRID,
    build_transition_graph,
    iter_rule_assignments,
    random_payoff_matrix,
)

from helpers import mk_instance, oracle_section_count, random_instance

FIG1 = StrategyState.from_string("ABAAABBA")


def st(text: str) -> StrategyState:
    return StrategyState.from_string(text)


def forged_trace(instance, initial: str, moves: list[tuple[int, str]]) -> Trace:
    """Hand-built trace: each move names (agent, resulting state string)."""
    events = []
    prev = st(initial).bits
    for t, (agent, state_text) in enumerate(moves):
        bits = st(state_text).bits
        events.append(TraceEvent(t, agent, bits, bits != prev))
        prev = bits
    return Trace(
        instance=instance,
        initial=st(initial),
        schedule=Scripted(tuple(agent for agent, _ in moves)),
        budget=max(1, len(moves)),
        events=events,
        outcome=BudgetExhausted(),
    )


class TestBordersAndSections:
    def test_fig1_border_classification(self):
        flags = borders(make_linear(8), FIG1)
        both = {i for i, b in enumerate(flags) if b.left_border and b.right_border}
        left_only = {i for i, b in enumerate(flags) if b.left_border and not b.right_border}
        right_only = {i for i, b in enumerate(flags) if b.right_border and not b.left_border}
        neither = {i for i, b in enumerate(flags) if not b.is_border}
        assert both == {0, 1, 7}
        assert left_only == {2, 5}
        assert right_only == {4, 6}
        assert neither == {3}

    def test_unanimous_borders(self):
        flags = borders(make_linear(5), st("AAAAA"))
        assert [b.left_border for b in flags] == [True, False, False, False, False]
        assert [b.right_border for b in flags] == [False, False, False, False, True]

    def test_alternating_all_borders(self):
        assert all(b.left_border and b.right_border for b in borders(make_linear(4), st("ABAB")))

    def test_fig1_sections(self):
        decomp = sections(make_linear(8), FIG1)
        assert [decomp.members(i) for i in range(decomp.count)] == [
            (0,),
            (1,),
            (2, 3, 4),
            (5, 6),
            (7,),
        ]
        assert decomp.count == 5

    def test_section_basics(self):
        assert sections(make_linear(5), st("AAAAA")).count == 1
        assert sections(make_linear(4), st("ABAB")).count == 4

    def test_count_identity_against_run_length_oracle(self):
        rng = SplitMix64(13)
        for _ in range(300):
            n = rng.randint(2, 14)
            state = StrategyState.random(n, rng)
            assert section_count(make_linear(n), state) == oracle_section_count(state.to_string())

    def test_sections_consistent_with_borders_exhaustive(self):
        # Section endpoints are exactly the border agents: all states n <= 12,
        # then random spot checks on longer paths.
        rng = SplitMix64(83)
        cases = [
            (n, StrategyState(bits, n)) for n in (2, 3, 5, 8, 12) for bits in range(1 << n)
        ]
        cases += [
            (n, StrategyState.random(n, rng)) for n in (16, 20, 24) for _ in range(200)
        ]
        for n, state in cases:
            g = make_linear(n)
            decomp = sections(g, state)
            flags = borders(g, state)
            lefts = {s.left for s in decomp.sections}
            rights = {s.right for s in decomp.sections}
            assert lefts == {i for i, b in enumerate(flags) if b.left_border}
            assert rights == {i for i, b in enumerate(flags) if b.right_border}
            covered = [v for i in range(decomp.count) for v in decomp.members(i)]
            assert covered == list(range(n))


class TestRingAndInteriorCounts:
    def test_ring_counts(self):
        assert ring_section_count(make_ring(5), st("AAAAA")) == 1
        assert ring_section_count(make_ring(4), st("ABAB")) == 4
        assert ring_section_count(make_ring(5), st("AABBB")) == 2

    def test_interior_counts(self):
        assert interior_section_count(make_linear(3), st("ABA")) == 1
        assert interior_section_count(make_linear(5), st("AABBA")) == 2
        with pytest.raises(PathTooShort):
            interior_section_count(make_linear(2), st("AB"))


class TestSectionMonotonicityExhaustive:
    def test_linear_count_never_increases_single_step(self):
        # Every instance on small paths, every state, every activation.
        for n in range(2, 6):
            mask = (1 << (n - 1)) - 1
            for rules in iter_rule_assignments(n):
                for pm in PAYOFF_GRID:
                    inst = mk_instance(
                        make_linear(n),
                        "".join("i" if r == UpdateRule.IMITATOR else "b" for r in rules),
                        pm.as_tuple(),
                    )
                    tg = build_transition_graph(inst)
                    for s in range(1 << n):
                        before = ((s ^ (s >> 1)) & mask).bit_count()
                        for a in range(n):
                            ns = tg.successor(s, a)
                            if ns != s:
                                after = ((ns ^ (ns >> 1)) & mask).bit_count()
                                assert after <= before, (n, rules, pm, s, a)

    def test_linear_monotonicity_randomized_beyond_exhaustive_range(self):
        rng = SplitMix64(67)
        for _ in range(150):
            n = rng.randint(7, 10)
            g = make_linear(n)
            rules = "".join("i" if rng.randrange(2) else "b" for _ in range(n))
            payoffs = [random_payoff_matrix(rng).as_tuple() for _ in range(n)]
            inst = mk_instance(g, rules, payoffs)
            state = StrategyState.random(n, rng)
            before = section_count(g, state)
            for a in range(n):
                after = StrategyState(step_bits(inst, state.bits, a), n)
                assert section_count(g, after) <= before

    def test_ring_count_never_increases_single_step(self):
        for n in range(3, 7):
            g = make_ring(n)
            for rules in iter_rule_assignments(n):
                for pm in PAYOFF_GRID:
                    inst = mk_instance(
                        g,
                        "".join("i" if r == UpdateRule.IMITATOR else "b" for r in rules),
                        pm.as_tuple(),
                    )
                    tg = build_transition_graph(inst)
                    for s in range(1 << n):
                        before = ring_section_count(g, StrategyState(s, n))
                        for a in range(n):
                            ns = tg.successor(s, a)
                            if ns != s:
                                after = ring_section_count(g, StrategyState(ns, n))
                                assert after <= before


class TestAnalyzeEngineTraces:
    def test_linear_traces_are_clean(self):
        rng = SplitMix64(7)
        for _ in range(30):
            n = rng.randint(2, 10)
            inst = mk_instance(
                make_linear(n),
                "".join("i" if rng.randrange(2) else "b" for _ in range(n)),
                [(2, 0, 0, 1), (3, 1, 0, 2)][rng.randrange(2)],
            )
            trace = run(inst, StrategyState.random(n, rng), RoundRobin())
            report = analyze(trace)
            assert report.clean, report.violations
            assert report.fixation_time is not None
            assert not report.provisional

    def test_merge_event_recorded(self):
        inst = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = run(inst, st("ABA"), Scripted((1, 0, 1, 2)), budget=4)
        report = analyze(trace)
        assert report.clean
        merges = [e for e in report.section_events if e.kind == "merge_3"]
        assert len(merges) == 1
        assert merges[0].count_before == 3 and merges[0].count_after == 1

    def test_tree_traces_clean_and_noted(self):
        rng = SplitMix64(15)
        for _ in range(25):
            inst = random_instance(rng, n_lo=4, n_hi=10)
            trace = run(inst, StrategyState.random(inst.n, rng), RoundRobin())
            report = analyze(trace)
            assert report.clean, report.violations

    def test_interior_migration_is_not_flagged(self):
        # The first branch agent may legally align with a constant attached
        # endpoint, pushing a boundary from the endpoint pair into the
        # interior. The interior-only count rises; the monitors must not fire.
        g = make_starlike([3, 1, 1])  # center 0, long branch 1-2-3
        inst = mk_instance(g, "bbbbbb", [(2, 0, 1, 3)] * 6)
        initial = st("BAAAAA")  # center B, everyone else A
        trace = run(inst, initial, Scripted((1,)), budget=1)
        assert trace.events[0].changed  # agent 1 adopts the center's B
        path = next(p for p in admitted_linear_paths(g) if 3 in p.agents)
        before = interior_section_count(path, initial)
        after = interior_section_count(path, trace.final_state())
        assert after == before + 1  # interior-only count rises...
        report = analyze(trace)
        assert report.clean  # ...but no monitor may flag it

    def test_ring_trace_notes(self):
        inst = uniform_instance(make_ring(5), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = run(inst, st("ABABB"), RoundRobin())
        report = analyze(trace)
        monitors_noted = {m for m, _ in report.notes}
        assert {"M1", "M2", "M6"} <= monitors_noted
        assert report.clean

    def test_general_graph_runs_m6(self):
        # C5 plus a chord: M1/M2 skipped, M6 still watches the chordless arc.
        g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])
        inst = uniform_instance(g, UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = run(inst, st("ABABA"), RoundRobin())
        report = analyze(trace)
        noted = {m for m, _ in report.notes}
        assert {"M1", "M2"} <= noted and "M6" not in noted
        assert report.clean


class TestForgedTraceSelfTests:
    def test_m1_detects_injected_split(self):
        inst = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = forged_trace(inst, "AAA", [(1, "ABA")])
        report = analyze(trace)
        m1 = report.violations_for("M1")
        assert len(m1) == 1 and m1[0].time == 0
        splits = [e for e in report.section_events if e.kind == "split_interior"]
        assert len(splits) == 1

    def test_m2_detects_border_wiggle(self):
        inst = uniform_instance(make_linear(4), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = forged_trace(inst, "AABB", [(1, "ABBB"), (1, "AABB")])
        report = analyze(trace)
        m2 = report.violations_for("M2")
        assert len(m2) == 1 and m2[0].time == 1
        assert report.fixation_time == 0
        sides = {(b.section, b.side, b.direction) for b in report.border_moves}
        assert (2, "L", "left") in sides and (2, "L", "right") in sides

    def test_m5_detects_forbidden_switch_back(self):
        inst = uniform_instance(make_linear(4), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        # triple (1, 2, 3): (A,A,B) switch at t=0, then (A,B,B) switch back at
        # t=1 while agent 3's utility rose from 0 to 1.
        trace = forged_trace(inst, "AAAB", [(2, "AABB"), (2, "AAAB")])
        report = analyze(trace)
        m5 = report.violations_for("M5")
        assert len(m5) == 1 and m5[0].time == 1

    def test_m5_allows_switch_back_when_utility_drops(self):
        # Chain 0-1-2 into hub 3 with leaves 4, 5. Triple (1, 2, 3): agent 2
        # switches under (A,A,B) while the hub earns 2 from its B-leaves;
        # after both leaves defect to A the hub earns only 1, so the switch
        # back under (A,B,B) is allowed and must not fire.
        g = Graph.from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (3, 5)])
        inst = uniform_instance(g, UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = forged_trace(
            inst,
            "AAABBB",
            [(2, "AABBBB"), (4, "AABBAB"), (5, "AABBAA"), (2, "AAABAA")],
        )
        report = analyze(trace)
        assert report.violations_for("M5") == []

    def test_m5_fires_with_extra_neighbors_when_utility_holds(self):
        # Same graph, but the leaves never defect: the hub's earnings hold,
        # so the switch-back is the forbidden pattern and must fire.
        g = Graph.from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (3, 5)])
        inst = uniform_instance(g, UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = forged_trace(inst, "AAABBB", [(2, "AABBBB"), (2, "AAABBB")])
        report = analyze(trace)
        assert len(report.violations_for("M5")) == 1

    def test_m6_detects_interior_split(self):
        g = make_starlike([2, 1, 1])
        inst = uniform_instance(g, UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        # admitted path leaf(2)-1-center(0); forge the path-interior agent 1
        # into a fresh section while the attached center never switches.
        trace = forged_trace(inst, "AAAAA", [(1, "ABAAA")])
        report = analyze(trace)
        m6 = report.violations_for("M6")
        assert len(m6) == 1 and m6[0].time == 0

    def test_m6_reset_on_attached_endpoint_change(self):
        g = make_starlike([2, 1, 1])
        inst = uniform_instance(g, UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        # center switches first; the later interior rise happens inside a new
        # interval... the count after the center's change (A->B) is the new
        # baseline, and agent 1's alignment with it does not raise the count.
        trace = forged_trace(inst, "AAAAA", [(0, "BAAAA"), (1, "BBAAA")])
        report = analyze(trace)
        assert report.violations_for("M6") == []

    def test_structural_validation(self):
        inst = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        bad = Trace(
            instance=inst,
            initial=st("AAA"),
            schedule=Scripted((0,)),
            budget=1,
            events=[TraceEvent(0, 0, st("ABB").bits, True)],  # two sites changed
            outcome=BudgetExhausted(),
        )
        with pytest.raises(ValueError):
            analyze(bad)
        bad_flag = Trace(
            instance=inst,
            initial=st("AAA"),
            schedule=Scripted((0,)),
            budget=1,
            events=[TraceEvent(0, 0, st("AAA").bits, True)],  # flag says changed
            outcome=BudgetExhausted(),
        )
        with pytest.raises(ValueError):
            analyze(bad_flag)


class TestProvisionalAndSeries:
    def test_budget_exhausted_marks_provisional(self):
        inst = uniform_instance(make_linear(8), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = run(inst, FIG1, RoundRobin(), budget=2)
        report = analyze(trace)
        assert report.provisional

    def test_series_recording_and_csv(self):
        inst = uniform_instance(make_linear(8), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = run(inst, FIG1, RoundRobin())
        report = analyze(trace, record_series=True)
        assert "linear" in report.series
        t0, c0 = report.series["linear"][0]
        assert (t0, c0) == (0, 5)
        csv = series_csv(report, "linear")
        assert csv.splitlines()[0] == "t,section_count"
        assert csv.splitlines()[1] == "0,5"

    def test_branch_series_on_starlike(self):
        g = make_starlike([2, 2, 1])
        inst = uniform_instance(g, UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = run(inst, st("ABABAB"), RoundRobin())
        report = analyze(trace, record_series=True)
        assert any(key.startswith("branch:1:") for key in report.series)

    def test_equilibrated_trace_fixation_time(self):
        inst = uniform_instance(make_linear(3), UpdateRule.BEST_RESPONDER, PayoffMatrix(2, 0, 0, 1))
        trace = run(inst, st("ABA"), Scripted((1, 0)), budget=2)
        assert isinstance(trace.outcome, Equilibrated)
        report = analyze(trace)
        assert report.fixation_time == 1  # the merge at t=0 fixes the count at time 1
