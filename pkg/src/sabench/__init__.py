"""Cyclic and distributed stochastic approximation for multi-agent optimization.

Four iteration schemes (one shared iterate swept agent by agent, or one local
copy per agent mixed over a communication graph) over shared problem,
gradient-estimator, and graph abstractions, plus a CLI harness for seeded
benchmark grids.
"""

from .core import (
    BlockPartition,
    CyclicProblem,
    DistributedProblem,
    GainSchedule,
    MeasurementCounter,
    as_param_vec,
    gain_at,
    make_partition,
    substream,
    subvector,
)
from .estimators import (
    BlockGradEstimate,
    PerturbSchedule,
    block_estimator,
    fdsa_block_gradient,
    local_gradient,
    mask_to_block,
    sg_block_gradient,
    spsa_block_gradient,
)
from .graph import (
    CommGraph,
    DynamicGraph,
    StaticGraph,
    complete_graph,
    dynamic_edge_sampler,
    graph_from_edges,
    load_edge_list,
    metropolis_weights,
    neighbors,
    ring_graph,
)
from .algorithms import (
    CISA,
    DSA,
    DSAS,
    GCSA,
    DivergenceError,
    MultiState,
    RunTrace,
    SingleState,
    StopRule,
    TraceRecord,
    cisa_iteration,
    consensus_average,
    consensus_error,
    dsa_iteration,
    dsa_s_iteration,
    gcsa_iteration,
    run,
)
from .problems import (
    RegressionField,
    SeparableQuadratic,
    SurveillanceScenario,
    fourier_features,
    local_estimate_vector,
    make_regression_field,
    make_separable_quadratic,
    make_surveillance,
    polynomial_features,
    run_tracking,
    true_optimum,
)

__version__ = "0.1.0"
