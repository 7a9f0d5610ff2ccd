"""Command-line surface: simulate, analyze, verify, hunt.

Configs are JSON with a versioned "schema": 1 field. One master seed per
config reproduces everything: components without explicit seeds derive
their own deterministically from it. All file formats use 1-based agent
ids.

Exit codes:
  simulate: 0 equilibrated, 2 not equilibrated (budget exhausted or
            repetition detected), 1 config error
  analyze:  0 no violations, 3 violations found, 1 unreadable trace
  verify:   0 equilibrates, 4 oscillates (witness written), 1 config
            error or instance too large
  hunt:     0 on clean completion (findings are data, not errors)
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from .analysis import analyze, section_count, series_csv
from .dynamics import (
    Equilibrated,
    RepetitionDetected,
    Schedule,
    StrategyState,
    Trace,
    read_trace_jsonl,
    run,
    schedule_from_dict,
    trace_hash,
    write_trace_jsonl,
)
from .errors import ConfigError, CoordynError, TooLarge
from .game import AgentSpec, Instance, PayoffMatrix, UpdateRule
from .rng import SplitMix64, derive_seed
from .topology import (
    Family,
    Graph,
    classify,
    make_linear,
    make_ring,
    make_starlike,
    parse_edge_list,
)
from .verifier import (
    HUNT_FAMILIES,
    check_equilibration,
    hunt,
    hunt_rows_csv,
    witness_to_dict,
)


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema") != 1:
        raise ConfigError(f"unsupported schema {cfg.get('schema')!r}, expected 1", field="schema")
    return cfg


def _parse_graph(spec, field: str = "graph") -> Graph:
    if not isinstance(spec, dict):
        raise ConfigError("graph must be an object", field=field)
    if "edges" in spec:
        try:
            edges = [(int(u) - 1, int(v) - 1) for u, v in spec["edges"]]
            n = int(spec.get("n", max(max(u, v) for u, v in edges) + 1))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad edge list: {exc}", field=f"{field}.edges") from exc
        return Graph.from_edges(n, edges)
    if "edge_list" in spec:
        return parse_edge_list(str(spec["edge_list"]))
    family = spec.get("family")
    if family == "linear":
        return make_linear(int(spec["n"]))
    if family == "ring":
        return make_ring(int(spec["n"]))
    if family == "starlike":
        return make_starlike([int(x) for x in spec["branches"]])
    raise ConfigError(
        f"graph needs 'edges', 'edge_list', or a family in linear/ring/starlike, got {family!r}",
        field=f"{field}.family",
    )


def _parse_agent_spec(spec, field: str) -> AgentSpec:
    if not isinstance(spec, dict):
        raise ConfigError("agent spec must be an object", field=field)
    try:
        rule = UpdateRule(spec["rule"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(
            f"rule must be 'best_responder' or 'imitator': {exc}", field=f"{field}.rule"
        ) from exc
    payoff = spec.get("payoff")
    if not (isinstance(payoff, (list, tuple)) and len(payoff) == 4):
        raise ConfigError("payoff must be a [R, S, T, P] list of 4 integers", field=f"{field}.payoff")
    r, s, t, p = (int(x) for x in payoff)
    return AgentSpec(rule, PayoffMatrix(r, s, t, p))


def _parse_initial(spec, n: int, master_seed: int) -> StrategyState:
    if not isinstance(spec, str):
        raise ConfigError("initial_state must be a string", field="initial_state")
    match = re.fullmatch(r"random(?:\((\d+)\))?", spec)
    if match:
        seed = int(match.group(1)) if match.group(1) else derive_seed(master_seed, "initial")
        return StrategyState.random(n, SplitMix64(seed))
    state = StrategyState.from_string(spec)
    if state.n != n:
        raise ConfigError(
            f"initial_state has {state.n} agents but the graph has {n}", field="initial_state"
        )
    return state


def parse_instance_config(cfg: dict) -> tuple[Instance, Schedule, StrategyState, int, int]:
    """Validate a config dict into (instance, schedule, initial, budget, seed)."""
    graph = _parse_graph(cfg.get("graph"))
    n = graph.n
    agents_spec = cfg.get("agents")
    if isinstance(agents_spec, dict):
        agents = tuple(_parse_agent_spec(agents_spec, "agents") for _ in range(n))
    elif isinstance(agents_spec, list):
        if len(agents_spec) != n:
            raise ConfigError(
                f"{len(agents_spec)} agent specs for a graph of {n} nodes", field="agents"
            )
        agents = tuple(
            _parse_agent_spec(spec, f"agents[{i}]") for i, spec in enumerate(agents_spec)
        )
    else:
        raise ConfigError("agents must be an object (uniform) or a list", field="agents")
    instance = Instance(graph, agents)

    seed = int(cfg.get("seed", 0))
    sched_spec = cfg.get("schedule", {"kind": "round_robin"})
    if not isinstance(sched_spec, dict):
        raise ConfigError("schedule must be an object", field="schedule")
    if sched_spec.get("kind") == "random_fair" and "seed" not in sched_spec:
        sched_spec = dict(sched_spec, seed=derive_seed(seed, "schedule"))
    schedule = schedule_from_dict(sched_spec)

    if "initial_state" not in cfg:
        raise ConfigError("initial_state is required", field="initial_state")
    initial = _parse_initial(cfg["initial_state"], n, seed)
    budget = int(cfg["budget"]) if "budget" in cfg else 10_000 * n
    if budget < 1:
        raise ConfigError("budget must be >= 1", field="budget")
    return instance, schedule, initial, budget, seed


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _print_summary(trace: Trace) -> None:
    outcome = trace.outcome
    if isinstance(outcome, Equilibrated):
        print(f"outcome: equilibrated at t={outcome.at_time}")
    elif isinstance(outcome, RepetitionDetected):
        print(
            f"outcome: repetition detected (period start t={outcome.period_start}, "
            f"length {outcome.period_length})"
        )
    else:
        print("outcome: budget exhausted")
    print(f"steps: {len(trace.events)}")
    final = trace.final_state()
    print(f"final state: {final}")
    if classify(trace.instance.graph) is Family.LINEAR:
        print(f"final section count: {section_count(trace.instance.graph, final)}")
    print(f"trace hash: {trace_hash(trace)}")


def _cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        instance, schedule, initial, budget, _ = parse_instance_config(cfg)
    except (ConfigError, CoordynError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    trace = run(instance, initial, schedule, budget)
    out = Path(args.output)
    with out.open("w") as fp:
        write_trace_jsonl(trace, fp)
    _print_summary(trace)
    print(f"trace written: {out}")
    return 0 if isinstance(trace.outcome, Equilibrated) else 2


def _cmd_analyze(args) -> int:
    try:
        with open(args.trace) as fp:
            trace = read_trace_jsonl(fp)
    except (OSError, ConfigError, ValueError, KeyError) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return 1
    try:
        report = analyze(trace, record_series=True)
    except ValueError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.output)
    out.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    csv_dir = Path(args.csv_dir) if args.csv_dir else out.with_suffix("").parent / (
        out.stem + "_series"
    )
    if report.series:
        csv_dir.mkdir(parents=True, exist_ok=True)
        for key in report.series:
            safe = key.replace(":", "_")
            (csv_dir / f"{safe}.csv").write_text(series_csv(report, key))
    for monitor in ("M1", "M2", "M5", "M6"):
        print(f"{monitor}: {len(report.violations_for(monitor))} violation(s)")
    for monitor, reason in report.notes:
        print(f"{monitor}: skipped ({reason})")
    print(f"report written: {out}")
    return 0 if report.clean else 3


def _cmd_verify(args) -> int:
    try:
        cfg = load_config(args.config)
        instance, _, initial, _, _ = parse_instance_config(cfg)
    except (ConfigError, CoordynError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        verdict = check_equilibration(
            instance,
            cap=args.cap,
            initial_state=initial if args.from_initial else None,
        )
    except TooLarge as exc:
        print(f"too large: {exc}", file=sys.stderr)
        return 1
    print(f"verdict: {verdict.result}")
    print(
        f"states: {verdict.state_count}  sccs: {verdict.scc_count}  "
        f"elapsed: {verdict.elapsed:.3f}s"
    )
    if verdict.witness is not None:
        payload = witness_to_dict(instance, verdict.witness)
        out = Path(args.witness)
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"witness written: {out}")
        return 4
    return 0


def _cmd_hunt(args) -> int:
    for family in args.family:
        if family not in HUNT_FAMILIES:
            print(
                f"unknown family {family!r}; choose from {', '.join(HUNT_FAMILIES)}",
                file=sys.stderr,
            )
            return 1
    report = hunt(
        args.family,
        max_n=args.max_n,
        seed=args.seed,
        budget=args.budget,
        cap=args.cap,
        workers=args.workers,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "hunt.csv").write_text(hunt_rows_csv(report))
    for i, witness in enumerate(report.witnesses):
        (out_dir / f"witness_{i:04d}.json").write_text(
            json.dumps(witness, indent=2, sort_keys=True) + "\n"
        )
    print(f"instances checked: {len(report.rows)}")
    print(f"oscillation witnesses: {report.oscillation_count()}")
    if report.skipped_too_large:
        print(f"skipped (too large): {report.skipped_too_large}")
    if report.interrupted:
        print("interrupted: partial report flushed")
    print(f"report written: {out_dir / 'hunt.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordyn",
        description="Simulate and verify asynchronous coordination dynamics on networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one instance and write a JSONL trace")
    p.add_argument("config", help="instance config (JSON)")
    p.add_argument("-o", "--output", default="trace.jsonl", help="trace output path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="replay a trace through the monitors")
    p.add_argument("trace", help="JSONL trace file")
    p.add_argument("-o", "--output", default="report.json", help="report output path")
    p.add_argument(
        "--csv-dir",
        default=None,
        help="directory for section-count CSV series (default: <report>_series/)",
    )
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("verify", help="exact equilibration verdict by model checking")
    p.add_argument("config", help="instance config (JSON)")
    p.add_argument("--witness", default="witness.json", help="witness output path if oscillating")
    p.add_argument("--cap", type=int, default=20, help="max agents (state space 2^n)")
    p.add_argument(
        "--from-initial",
        action="store_true",
        help="restrict to states reachable from the config's initial_state",
    )
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("hunt", help="sweep instance families for oscillation witnesses")
    p.add_argument(
        "--family",
        action="append",
        required=True,
        help=f"family to sweep (repeatable): {', '.join(HUNT_FAMILIES)}",
    )
    p.add_argument("--max-n", type=int, default=7, help="largest graph size to enumerate")
    p.add_argument("--seed", type=int, default=0, help="master seed for the sweep")
    p.add_argument("--budget", type=int, default=5000, help="max instances to check")
    p.add_argument("--cap", type=int, default=20, help="verifier state-space cap")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", default="hunt_out", help="output directory")
    p.set_defaults(func=_cmd_hunt)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
