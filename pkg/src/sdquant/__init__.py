"""Semi-discrete optimal transport quantization on grid densities."""

from .cells import CellPartition, PointConfiguration, power_partition, tie_weights, voronoi_partition
from .cost import SQUARED_EUCLIDEAN, CostSpec
from .density import GridDensity, build_disk_mixture, build_uniform_box, fig1_mixture, load_pgm, region_stats
from .divergences import (
    EntropicConfig,
    SlicedConfig,
    entropic_semidiscrete,
    max_sliced_semidiscrete,
    sliced_w2_discrete,
    w2_1d_discrete,
)
from .dual import DualReport, DualWeights, SolverOptions, dual_objective, solve_dual
from .lloyd import (
    LloydOptions,
    SolverTrace,
    grad_optimal,
    grad_uniform,
    loss_optimal,
    loss_uniform,
    run_optimal,
    run_uniform,
    step_optimal,
    step_uniform,
)

__version__ = "0.1.0"
