"""Asynchronous best-response/imitation coordination dynamics on networks.

Simulation engine with potential-function monitors and an exhaustive
fair-cycle verifier for small instances.
"""

from .analysis import (
    BorderClass,
    BorderMove,
    MonotonicityReport,
    Section,
    SectionDecomposition,
    SectionEvent,
    Violation,
    analyze,
    borders,
    interior_section_count,
    ring_section_count,
    section_count,
    sections,
)
from .dynamics import (
    BudgetExhausted,
    Equilibrated,
    EventuallyPeriodic,
    RandomFair,
    RepetitionDetected,
    RoundRobin,
    Schedule,
    Scripted,
    Trace,
    TraceEvent,
    instance_from_dict,
    read_trace_jsonl,
    run,
    schedule_from_dict,
    step,
    trace_hash,
    write_trace_jsonl,
)
from .errors import (
    ConfigError,
    ConstraintViolated,
    CoordynError,
    InvalidAgent,
    InvalidGraph,
    IsolatedAgent,
    NotATree,
    NotBranching,
    NotBranchingAgent,
    PathTooShort,
    ScriptExhausted,
    TooLarge,
    TooSmall,
    WrongRule,
)
from .game import (
    AgentSpec,
    Instance,
    PayoffMatrix,
    Strategy,
    StrategyState,
    UpdateRule,
    best_response_target,
    imitation_target,
    is_equilibrium,
    uniform_instance,
    update,
    utility,
    validate_payoff,
)
from .rng import SplitMix64, derive_seed
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
    is_sparse_tree,
    make_linear,
    make_ring,
    make_starlike,
    nonisomorphic_trees,
    parse_edge_list,
    random_tree,
)
from .verifier import (
    PAYOFF_GRID,
    FairCycleWitness,
    HuntReport,
    TransitionGraph,
    Verdict,
    build_transition_graph,
    check_equilibration,
    find_fair_cycle,
    hunt,
    random_payoff_matrix,
    validate_witness,
)

__version__ = "0.1.0"
