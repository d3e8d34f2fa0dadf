"""Conformal prediction sets for object-valued responses in metric spaces."""
from .conformal import (
    ConformalModel,
    CoverageReport,
    PredictionSet,
    SplitPlan,
    calibrate_rank,
    conformal_quantile,
    evaluate_coverage,
    make_split,
    order_statistic_rank,
    predict_set,
    prediction_sets,
    rank_based_set,
    split_fit,
)
from .data import Dataset
from .io import load_dataset, load_model, save_dataset, save_model
from .errors import (
    ConformalObjectsError,
    ConvergenceError,
    DatasetError,
    InvalidPointError,
    NoLocalDataError,
    SpaceError,
)
from .profiles import (
    ProfileTable,
    TGrid,
    conditional_transport_rank,
    estimate_cpc,
    estimate_cps,
    estimate_profile,
    fit_profile_table,
    w1_profile_distance,
)
from .montecarlo import MonteCarloReport, PipelineConfig, bandwidth_sweep, run_monte_carlo
from .population import population_cpc, population_cps, population_scores
from .simulate import GeneratorSpec, generate
from .single_index import BinPlan, estimate_theta, local_frechet_fit, project_and_fit
from .smoothing import KernelSpec, LocalLinearWeights, local_linear_weights, rule_of_thumb_bandwidth
from .spaces import (
    Euclidean,
    MetricSpace,
    Network,
    Sphere2,
    Spider3,
    Wasserstein1D,
    candidate_grid,
    distance,
    exp_map_sphere,
    frechet_mean,
    log_map_sphere,
    space_from_dict,
    transport_add,
    transport_scale,
)

__version__ = "0.1.0"
