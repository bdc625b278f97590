"""netnum: joint congestion control, routing and scheduling for
multi-commodity networks, with baselines, queue simulation and an
experiment harness."""

from .admm import (
    AdmmParams,
    AdmmState,
    DivergenceError,
    IterationMetrics,
    NotConvergedError,
    Reference,
    RunResult,
    admm_slot,
    default_beta,
    kkt_residual,
    lyapunov_value,
    reference_solve,
    run,
    total_utility,
)
from .baselines import proximal_slot, qca_slot, run_proximal, run_qca
from .capacity import (
    FeasibleRateSet,
    GreedyMatchingOracle,
    MaxWeightOracle,
    enumerate_box_atoms,
    enumerate_node_exclusive_atoms,
)
from .network import (
    FlowSpec,
    NetworkGraph,
    NetworkInstance,
    build_incidence,
    conservation_residual,
    generate_er_instance,
    instance_from_json,
    instance_to_json,
    load_instance,
    save_instance,
)
from .queuesim import QueueState, queue_bound_estimate, queue_step, simulate_queues
from .routing import LinkRouteProblem, project_capped_simplex, route_link
from .scheduling import (
    ScheduleSolution,
    SchedulingProblem,
    caratheodory_reduce,
    solve_scheduling_qp,
    split_rates,
)
from .utility import (
    UtilitySpec,
    congestion_step_closed_form,
    congestion_step_numeric,
    utility_grad,
    utility_value,
)

__version__ = "0.1.0"
