"""Boosted-tree intensity estimation for spatial point processes."""

from ._backend import backend_name
from .bench import BenchResult, Scenario, preset_m, run_scenario
from .boosting import (
    LeafStats,
    RegressionTree,
    StageData,
    TreeGrower,
    best_split,
    grow_tree,
    leaf_loss,
    leaf_score,
    predict_tree,
)
from .geometry import (
    CovariateStack,
    PointPattern,
    QuadratureGrid,
    Window,
    covariate_at,
    quad_integrate,
)
from .metrics import iae, kfold_eval, test_poisson_loglik
from .secondorder import (
    KEstimate,
    PairCorrelation,
    WeightField,
    k_hat,
    pair_correlation,
    weight_field,
)
from .simulate import (
    ClusterSpec,
    GrfSpec,
    IntensityModel,
    calibrate_alpha,
    sample_covariates,
    sample_grf,
    sample_lgcp,
    sample_poisson,
    sample_thomas,
)
from .trainer import (
    CvGrid,
    CvReport,
    Ensemble,
    FitConfig,
    cv_select,
    fit,
    loss_poisson,
    loss_weighted,
    predict_log_intensity,
    weights_stage,
)

__version__ = "0.1.0"
