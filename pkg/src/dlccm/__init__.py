"""Downlink channel covariance estimation from uplink covariance via
graph-regularized Gaussian RBF interpolation, with dataset synthesis,
evaluation metrics, an MMSE channel-estimation downstream task, and the
associated distance-ratio and error-bound diagnostics."""

__version__ = "0.1.0"

from .array_model import (
    AngularProfile,
    ArrayConfig,
    CovarianceFirstRow,
    Link,
    PasFamily,
    ccm_first_row,
    expand_toeplitz,
    from_feature,
    pas_density,
    steering_vector,
    to_feature,
)
from .dataset import (
    Dataset,
    NoiseSpec,
    UserSample,
    build_dataset,
    draw_profiles,
    load_dataset,
    noisy_sample_covariance,
    normalize_first_entry,
    sample_channels,
    save_dataset,
    structure_project,
)
from .learner import (
    Hyperparams,
    SigmaGrid,
    TrainedInterpolator,
    TrainingTrace,
    build_laplacian,
    fit,
    kernel_matrix,
    lipschitz_bound,
    load_model,
    predict,
    predict_raw,
    save_model,
    sigma_objective,
    train,
    update_embedding,
    update_sigma,
)
from .metrics import (
    MetricReport,
    cmd,
    dictionary_estimate,
    dm,
    evaluate_features,
    nmse,
)
from .mmse import (
    PilotConfig,
    PilotStyle,
    channel_experiment,
    make_pilots,
    mmse_estimate,
    mmse_mse_closed_form,
    numerical_rank,
)
from .theory import BoundReport, KQuery, bound_components, k_constant, sine_ratio
from .experiments import (
    ExperimentConfig,
    ResultsTable,
    derive_seed,
    emit_plotdata,
    load_config,
    noiseless_preset,
    parse_config,
    run_mmse_experiment,
    run_sweep,
    summarize_mmse,
    summarize_sweep,
)
