"""Potential-function monitors: borders, sections, and trace replay checks.

The core potential is the section count of a path: the number of maximal
runs of consecutive same-strategy agents. Monitors replay a recorded trace
and flag any step that breaks one of the monotonicity laws the dynamics
are supposed to obey:

  M1  on a linear instance, the section count of the whole graph never
      increases at any step;
  M2  after the section count has fixated, a section border that has
      expanded outward never contracts back (left-then-right for left
      borders, right-then-left for right borders);
  M5  an agent p of degree 2 whose one-side neighbor also has degree 2
      never performs the forbidden switch pair: switching away from the
      (s, s, not-s) local pattern at some step and later switching back
      under (s, not-s, not-s) while the far neighbor earns at least as
      much as before (both mirror orientations and both strategy
      complements are watched);
  M6  on every admitted path, while the externally attached endpoints keep
      their strategies, the path's section count never increases; a change
      of an attached endpoint resets the baseline.

M6 deliberately tracks the full path's section count rather than the count
over interior agents alone: the interior-only count can rise legitimately
when the first interior agent aligns with a constant attached endpoint
(the boundary migrates from the endpoint pair into the interior), whereas
the full count is invariant under exactly the conditions the monitors care
about. The standalone interior count remains available as
interior_section_count for the paths' own bookkeeping.

Monitors are pure replay: utilities needed by M5 are recomputed from the
states, never read from the file. Monitors that do not apply to the
trace's graph family are skipped with a note instead of failing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

from .dynamics import Equilibrated, Trace
from .errors import PathTooShort
from .game import StrategyState, utility_bits
from .topology import (
    AdmittedPath,
    Branch,
    EndCondition,
    Family,
    Graph,
    admitted_linear_paths,
    branches,
    branching_agents,
    classify,
    path_order,
    ring_order,
)

PathLike = Union[Graph, AdmittedPath, Branch, Sequence[int]]


def _order_of(path: PathLike) -> tuple[int, ...]:
    if isinstance(path, Graph):
        return tuple(path_order(path))
    if isinstance(path, (AdmittedPath, Branch)):
        return path.agents
    return tuple(path)


def _count_over(order: Sequence[int], bits: int) -> int:
    """1 + number of unequal adjacent strategy pairs along the order."""
    count = 1
    prev = (bits >> order[0]) & 1
    for v in order[1:]:
        cur = (bits >> v) & 1
        if cur != prev:
            count += 1
        prev = cur
    return count


@dataclass(frozen=True)
class BorderClass:
    left_border: bool
    right_border: bool

    @property
    def is_border(self) -> bool:
        return self.left_border or self.right_border


@dataclass(frozen=True)
class Section:
    """Maximal same-strategy run: positions [left, right] along the path."""

    left: int
    right: int
    strategy_bit: int

    @property
    def size(self) -> int:
        return self.right - self.left + 1


@dataclass(frozen=True)
class SectionDecomposition:
    agents: tuple[int, ...]  # host agent ids in path order
    sections: tuple[Section, ...]

    @property
    def count(self) -> int:
        return len(self.sections)

    def members(self, index: int) -> tuple[int, ...]:
        """Host agent ids of section `index` (0-based label)."""
        sec = self.sections[index]
        return self.agents[sec.left : sec.right + 1]


def borders(path: PathLike, state: StrategyState) -> list[BorderClass]:
    """Per-agent border flags along the path.

    The first agent is always a left border and the last always a right
    border (endpoint convention); an interior agent is a left/right border
    iff its strategy differs from the previous/next agent in path order.
    """
    order = _order_of(path)
    bits = state.bits
    out = []
    for i, v in enumerate(order):
        own = (bits >> v) & 1
        left = i == 0 or own != (bits >> order[i - 1]) & 1
        right = i == len(order) - 1 or own != (bits >> order[i + 1]) & 1
        out.append(BorderClass(left_border=left, right_border=right))
    return out


def sections(path: PathLike, state: StrategyState) -> SectionDecomposition:
    """Decompose the path into maximal same-strategy sections, left to right."""
    order = _order_of(path)
    bits = state.bits
    secs = []
    left = 0
    prev = (bits >> order[0]) & 1
    for i in range(1, len(order)):
        cur = (bits >> order[i]) & 1
        if cur != prev:
            secs.append(Section(left, i - 1, prev))
            left = i
            prev = cur
    secs.append(Section(left, len(order) - 1, prev))
    return SectionDecomposition(order, tuple(secs))


def section_count(path: PathLike, state: StrategyState) -> int:
    return _count_over(_order_of(path), state.bits)


def ring_section_count(graph: Graph, state: StrategyState) -> int:
    """Number of maximal same-strategy arcs around a ring (1 if unanimous)."""
    order = ring_order(graph)
    bits = state.bits
    boundaries = 0
    for i, v in enumerate(order):
        w = order[(i + 1) % len(order)]
        if (bits >> v) & 1 != (bits >> w) & 1:
            boundaries += 1
    return boundaries if boundaries else 1


def interior_section_count(path: PathLike, state: StrategyState) -> int:
    """Section count over the path's interior agents (positions 2..m-1)."""
    order = _order_of(path)
    if len(order) < 3:
        raise PathTooShort(f"interior needs a path of >= 3 agents, got {len(order)}")
    return _count_over(order[1:-1], state.bits)


# ---------------------------------------------------------------------------
# Trace monitors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    monitor: str
    time: int  # index of the offending activation event
    description: str


@dataclass(frozen=True)
class BorderMove:
    time: int
    section: int  # 1-based label, fixed at fixation time
    side: str  # "L" or "R"
    direction: str  # "left" or "right"


@dataclass(frozen=True)
class SectionEvent:
    """Classification of one state change on a linear graph.

    One step changes one agent, so the section count moves by a value in
    {-2, -1, 0, +1, +2}, classified as merge_3, merge_2, border_move,
    split_end, split_interior respectively. Splits are the events M1
    forbids.
    """

    time: int
    kind: str
    count_before: int
    count_after: int


@dataclass
class MonotonicityReport:
    """Outcome of replaying every applicable monitor over one trace."""

    fixation_time: int | None
    provisional: bool
    border_moves: list[BorderMove] = field(default_factory=list)
    section_events: list[SectionEvent] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    notes: list[tuple[str, str]] = field(default_factory=list)
    series: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return not self.violations

    def violations_for(self, monitor: str) -> list[Violation]:
        return [v for v in self.violations if v.monitor == monitor]

    def as_dict(self) -> dict:
        def rendered(violations: list[Violation]) -> list[dict]:
            return [
                {"monitor": v.monitor, "time": v.time, "description": v.description}
                for v in violations
            ]

        return {
            "fixation_time": self.fixation_time,
            "provisional": self.provisional,
            "violations": rendered(self.violations),
            "violations_by_monitor": {
                m: rendered(self.violations_for(m)) for m in ("M1", "M2", "M5", "M6")
            },
            "violation_counts": {
                m: len(self.violations_for(m)) for m in ("M1", "M2", "M5", "M6")
            },
            "border_moves": [
                {"time": b.time, "section": b.section, "side": b.side, "direction": b.direction}
                for b in self.border_moves
            ],
            "section_events": [
                {
                    "time": e.time,
                    "kind": e.kind,
                    "count_before": e.count_before,
                    "count_after": e.count_after,
                }
                for e in self.section_events
            ],
            "notes": [{"monitor": m, "reason": r} for m, r in self.notes],
        }


def _validate_trace(trace: Trace) -> None:
    prev = trace.initial.bits
    for ev in trace.events:
        diff = prev ^ ev.state_bits
        if diff & ~(1 << ev.agent):
            raise ValueError(
                f"event t={ev.t}: state changed away from the active agent {ev.agent}"
            )
        if bool(diff) != ev.changed:
            raise ValueError(f"event t={ev.t}: changed flag does not match the states")
        prev = ev.state_bits


def _monitor_linear(trace: Trace, order: list[int], report: MonotonicityReport) -> None:
    """M1 (count never increases) and M2 (borders expand monotonically)."""
    kind_by_delta = {
        -2: "merge_3",
        -1: "merge_2",
        0: "border_move",
        1: "split_end",
        2: "split_interior",
    }
    counts = [_count_over(order, trace.initial.bits)]
    bits_seq = [trace.initial.bits]
    for ev in trace.events:
        counts.append(_count_over(order, ev.state_bits) if ev.changed else counts[-1])
        bits_seq.append(ev.state_bits)
        if ev.changed:
            report.section_events.append(
                SectionEvent(ev.t, kind_by_delta[counts[-1] - counts[-2]], counts[-2], counts[-1])
            )
        if counts[-1] > counts[-2]:
            report.violations.append(
                Violation(
                    "M1",
                    ev.t,
                    f"section count rose {counts[-2]} -> {counts[-1]} when agent "
                    f"{ev.agent + 1} switched",
                )
            )

    fixation = 0
    for t in range(1, len(counts)):
        if counts[t] != counts[t - 1]:
            fixation = t
    report.fixation_time = fixation
    report.provisional = not isinstance(trace.outcome, Equilibrated)

    # Track borders from the fixation state onward; with the count constant,
    # every change is a one-position boundary shift between two sections.
    decomp = sections(order, StrategyState(bits_seq[fixation], trace.instance.n))
    lefts = [s.left for s in decomp.sections]
    rights = [s.right for s in decomp.sections]
    pos_of = {v: i for i, v in enumerate(order)}
    stretched_left: set[int] = set()  # labels whose left border has moved left
    stretched_right: set[int] = set()  # labels whose right border has moved right

    def log_move(t: int, label: int, side: str, direction: str) -> None:
        report.border_moves.append(BorderMove(t, label, side, direction))
        if side == "L":
            if direction == "left":
                stretched_left.add(label)
            elif label in stretched_left:
                report.violations.append(
                    Violation(
                        "M2",
                        t,
                        f"left border of section {label} moved left earlier and "
                        f"moved right at t={t}",
                    )
                )
        else:
            if direction == "right":
                stretched_right.add(label)
            elif label in stretched_right:
                report.violations.append(
                    Violation(
                        "M2",
                        t,
                        f"right border of section {label} moved right earlier and "
                        f"moved left at t={t}",
                    )
                )

    for ev in trace.events:
        if ev.t + 1 <= fixation or not ev.changed:
            continue
        pos = pos_of[ev.agent]
        k = next(i for i in range(len(lefts)) if lefts[i] <= pos <= rights[i])
        if lefts[k] == pos and rights[k] == pos:
            raise ValueError(f"event t={ev.t}: singleton section changed after fixation")
        if pos == lefts[k] and k > 0:
            rights[k - 1] += 1
            lefts[k] += 1
            log_move(ev.t, k, "R", "right")  # labels are 1-based
            log_move(ev.t, k + 1, "L", "right")
        elif pos == rights[k] and k < len(lefts) - 1:
            rights[k] -= 1
            lefts[k + 1] -= 1
            log_move(ev.t, k + 1, "R", "left")
            log_move(ev.t, k + 2, "L", "left")
        else:
            raise ValueError(
                f"event t={ev.t}: section count changed after computed fixation time"
            )


def _monitor_impossible_switch(trace: Trace, report: MonotonicityReport) -> None:
    """M5: watch degree-2 pairs for the forbidden switch-back pattern."""
    graph = trace.instance.graph
    by_agent: dict[int, list[tuple[int, int]]] = {}
    for p in range(graph.n):
        if graph.degree(p) != 2:
            continue
        u, w = graph.adjacency[p]
        for a, b in ((u, w), (w, u)):
            if graph.degree(a) == 2:
                by_agent.setdefault(p, []).append((a, b))
    if not by_agent:
        report.notes.append(("M5", "no adjacent degree-2 pair in this graph"))
        return

    # (a, p, b, s) -> least utility of b seen at a qualifying first switch,
    # where s is the shared strategy bit of a and p before that switch.
    first_switch: dict[tuple[int, int, int, int], int] = {}
    prev = trace.initial.bits
    for ev in trace.events:
        if ev.changed and ev.agent in by_agent:
            p = ev.agent
            own = (prev >> p) & 1
            for a, b in by_agent[p]:
                xa = (prev >> a) & 1
                xb = (prev >> b) & 1
                if xa == own and xb != own:
                    # pattern (s, s, not-s), p switching s -> not-s
                    key = (a, p, b, own)
                    u_b = utility_bits(trace.instance, prev, b)
                    if key not in first_switch or u_b < first_switch[key]:
                        first_switch[key] = u_b
                elif xa != own and xb == own:
                    # pattern (s, not-s, not-s), p switching not-s -> s
                    key = (a, p, b, xa)
                    if key in first_switch:
                        u_b = utility_bits(trace.instance, prev, b)
                        if u_b >= first_switch[key]:
                            report.violations.append(
                                Violation(
                                    "M5",
                                    ev.t,
                                    f"agent {p + 1} switched back under "
                                    f"({a + 1},{p + 1},{b + 1}) with neighbor "
                                    f"{b + 1} earning {u_b} >= {first_switch[key]}",
                                )
                            )
        prev = ev.state_bits


def _monitor_admitted_paths(
    trace: Trace, paths: list[AdmittedPath], report: MonotonicityReport, record_series: bool
) -> None:
    """M6: per admitted path, count non-increasing between attached-endpoint changes."""
    watchers = []
    for path in paths:
        attached = {
            end
            for end, cond in zip((path.agents[0], path.agents[-1]), path.end_conditions)
            if cond is EndCondition.EXTERNALLY_ATTACHED
        }
        members = set(path.agents)
        count = _count_over(path.agents, trace.initial.bits)
        key = f"path:{path.agents[0] + 1}-{path.agents[-1] + 1}"
        series = [(0, count)] if record_series else None
        watchers.append([path, attached, members, count, key, series])

    for ev in trace.events:
        for watcher in watchers:
            path, attached, members, count, key, series = watcher
            if not ev.changed or ev.agent not in members:
                if series is not None:
                    series.append((ev.t + 1, count))
                continue
            new_count = _count_over(path.agents, ev.state_bits)
            if ev.agent in attached:
                watcher[3] = new_count  # endpoint changed: new baseline, no check
            else:
                if new_count > count:
                    report.violations.append(
                        Violation(
                            "M6",
                            ev.t,
                            f"section count of path {key} rose {count} -> {new_count} "
                            f"while attached endpoints were unchanged",
                        )
                    )
                watcher[3] = new_count
            if series is not None:
                series.append((ev.t + 1, watcher[3]))

    if record_series:
        for _, _, _, _, key, series in watchers:
            report.series[key] = series


def _record_branch_series(trace: Trace, report: MonotonicityReport) -> None:
    graph = trace.instance.graph
    for hub in branching_agents(graph):
        for br in branches(graph, hub):
            if not br.agents:
                continue
            members = set(br.agents)
            key = f"branch:{hub + 1}:{br.agents[0] + 1}"
            series = [(0, _count_over(br.agents, trace.initial.bits))]
            for ev in trace.events:
                count = (
                    _count_over(br.agents, ev.state_bits)
                    if ev.changed and ev.agent in members
                    else series[-1][1]
                )
                series.append((ev.t + 1, count))
            report.series[key] = series


def analyze(trace: Trace, record_series: bool = False) -> MonotonicityReport:
    """Replay a trace through every monitor that applies to its graph family.

    Raises ValueError if the trace is structurally inconsistent (a state
    change away from the active agent, or a wrong changed flag). Monitors
    are otherwise independent: inapplicable ones add a note and are
    skipped. With record_series, per-path (and, on trees with branching
    agents, per-branch) section-count time series are attached for export.
    """
    _validate_trace(trace)
    report = MonotonicityReport(fixation_time=None, provisional=False)
    family = classify(trace.instance.graph)

    if family is Family.LINEAR:
        order = path_order(trace.instance.graph)
        _monitor_linear(trace, order, report)
        if record_series:
            series = [(0, _count_over(order, trace.initial.bits))]
            for ev in trace.events:
                series.append(
                    (ev.t + 1, _count_over(order, ev.state_bits) if ev.changed else series[-1][1])
                )
            report.series["linear"] = series
    else:
        report.notes.append(("M1", f"requires a linear graph, family is {family.value}"))
        report.notes.append(("M2", f"requires a linear graph, family is {family.value}"))

    _monitor_impossible_switch(trace, report)

    paths = [p for p in admitted_linear_paths(trace.instance.graph) if len(p) >= 3]
    if paths:
        _monitor_admitted_paths(trace, paths, report, record_series)
    else:
        reason = (
            "rings have no admitted paths without a designated anchor"
            if family is Family.RING
            else "no admitted path of length >= 3"
        )
        report.notes.append(("M6", reason))

    if record_series and family in (Family.STARLIKE, Family.SPARSE_TREE, Family.DENSE_TREE):
        _record_branch_series(trace, report)
    return report


def series_csv(report: MonotonicityReport, key: str) -> str:
    """CSV rendering (`t,section_count`) of one recorded time series."""
    rows = ["t,section_count"]
    rows.extend(f"{t},{c}" for t, c in report.series.get(key, []))
    return "\n".join(rows) + "\n"
