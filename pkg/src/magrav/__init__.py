"""Discrete Monge-Ampere gravitation at desk scale.

The package implements the permutation potential and its softmax
regularization, the family of least-action functionals in both time gauges,
an epsilon-continuation minimizer, an independent 1-D pattern-enumeration
oracle, the event-driven sticky-collision simulator, the heat-wave companion
ODE/SDE, and the invariant measurement suite (energy, momentum, shocks,
velocity jumps).
"""

__version__ = "0.1.0"

from .clouds import (
    DEFAULT_CLUSTER_TOL,
    Lattice,
    Partition,
    Trajectory,
    as_cloud,
    is_refinement,
    join_partitions,
    ordered_partitions,
    partition_of,
    permute,
    project_class_average,
    sort_ascending,
)
from .errors import CapabilityError, GaugeError, MagravError, NumericalError, ScenarioError
from .potential import (
    N_CAP,
    delta_gap,
    extended_gradient,
    f_eps,
    f_max,
    grad_f_eps,
    hess_h_apply,
    internal_energy,
    min_norm_point,
    optimal_assignment,
    resolvent_f,
    resolvent_f_eps,
    softmax_stats,
)
from .actions import (
    ActionSpec,
    ActionValue,
    change_gauge,
    eval_action,
    eval_g,
    grad_discretized_action,
    lambda_prime_equivalent,
)
from .minimize import (
    OracleResult,
    ShockPattern,
    SolveOptions,
    SolveReport,
    SweepResult,
    continuation_sweep,
    minimize_fixed_eps,
    oracle_minimizer_1d,
    straight_line_trajectory,
)
from .sticky import Cluster, MergeEvent, SimState, first_collision_time, flow_free, merge_clusters, simulate_sticky
from .heatwave import NoiseSpec, integrate_companion, rho_eps, sample_sde, sample_sde_batch, v_eps
from .analysis import (
    EnergyProfile,
    JumpCheck,
    ShockRecord,
    check_velocity_jump,
    detect_shocks,
    energy_profile,
    momentum_residual,
)
from .scenario import Scenario, load_scenario, save_scenario
from .experiments import run_experiment
