"""Near-field channel estimation and single-anchor localization with a
multiport stacked-metasurface front end."""

from .channel import (
    ChannelRealization,
    CovarianceModel,
    SteeringVector,
    covariance_from_matrix,
    draw_channel,
    estimate_covariance,
    reduce_subspace,
    steering_matrix,
    steering_vector,
)
from .errors import (
    ConditioningError,
    ConfigurationError,
    EstimationError,
    OptimizationError,
    SimlocError,
)
from .geometry import (
    ArrayGeometry,
    GainModel,
    GeometryConfig,
    UncertaintyRegion,
    build_sim_geometry,
    fraunhofer_distance,
    is_near_field,
    region_at,
    sample_region,
)
from .multiport import (
    ImpedanceParams,
    Projection,
    SimNetwork,
    build_impedance,
    build_output_coupling,
    build_sim_network,
    effective_projection,
    row_orthonormality_gap,
)
from .simopt import (
    CalibratedProjection,
    OptimizationTrace,
    OptimizerConfig,
    calibrate_projection,
    gradient,
    objective,
    optimize,
    optimize_multistart,
)
from .estimation import (
    EstimationReport,
    ObservationModel,
    digital_baseline,
    mmse_full,
    mmse_post_sim,
    mmse_reduced,
    monte_carlo_mse,
    rsls_ideal,
    rsls_post_sim,
)
from .bounds import (
    MismatchMetrics,
    PebReport,
    channel_jacobian,
    effective_noise_from_estimation,
    fim_peb,
    mismatch_metrics,
    mse_ratio_check,
)
from .localizer import LocalizerConfig, localize
from .config import ScenarioConfig, load_config, load_preset
from .sweep import ResultRecord, load_records, plot_tables, run_cell, run_sweep, save_records

__version__ = "0.1.0"
