"""Query-aware age-of-information scheduling.

Build the query/error chains (:mod:`qaoi.chains`), assemble the decision
process (:mod:`qaoi.model`), solve it (:mod:`qaoi.solver`), simulate
policies or fixed schedules (:mod:`qaoi.simulate`), check the feedback-free
closed forms (:mod:`qaoi.analytic`), and drive batches from scenario
configs (:mod:`qaoi.scenario`, ``qaoi`` CLI).
"""

from ._backend import BACKEND
from ._version import __version__
from .chains import (
    MarkovProcess,
    build_constant_error,
    build_periodic_query,
    build_satellite_error,
    build_uniform_query,
    chain_from_descriptor,
    query_phase_map,
    sample_next,
    to_descriptor,
)
from .errors import (
    IndexMismatch,
    InvalidAction,
    InvalidStrategy,
    ManifestMismatch,
    NonConvergence,
    TooLarge,
)
from .model import (
    Action,
    CostKind,
    ModelConfig,
    SystemState,
    TransitionEntry,
    admissible_actions,
    enumerate_states,
    expected_cost,
    successors,
)
from .simulate import (
    EquallySpaced,
    FixedStrategy,
    MetricsReport,
    PreQueryBurst,
    SimConfig,
    TraceRecord,
    simulate_fixed,
    simulate_policy,
    simulate_policy_seeds,
)
from .solver import (
    Policy,
    SolveReport,
    ValueFunction,
    action_values,
    bellman_residual,
    brute_force_optimal,
    evaluate_policy,
    improve_policy,
    load_policy,
    policy_iteration,
    save_policy,
    value_iteration,
)
from .analytic import (
    SimpleCaseParams,
    ccdf_from_pmf,
    pmf_pq_aoi,
    pmf_pq_qaoi,
    pmf_qapa_aoi,
    pmf_qapa_aoi_compact,
    pmf_qapa_qaoi,
    tabulate_pmf,
)
from .scenario import (
    RunResult,
    ScenarioSpec,
    build_model,
    compare_policies,
    load_scenario,
    rerun_from_manifest,
    run_scenario,
    save_scenario,
)

__all__ = [name for name in dir() if not name.startswith("_")]
