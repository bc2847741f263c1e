"""gnuq: gradient-norm uncertainty estimators with an HMC reference.

Delta-method uncertainty for small feedforward classifiers and regressors:
the squared gradient norm ||grad p||^2 as the epistemic estimate, p(1-p)
as the aleatoric one, damped-Fisher Laplace variants, and a Hamiltonian
Monte Carlo posterior as the ground truth they are validated against.

Submodules: ``nnet`` (models and exact gradients), ``synthgen`` (datasets),
``trainmap`` (MAP fitting), ``uq`` (estimators and maps), ``refpost`` (HMC),
``stats`` (correlations and tests), ``bench`` (experiment pipelines),
``cli`` (command line). ``BACKEND`` names the active compute kernel
("compiled" or "python"; override with GNUQ_BACKEND).
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .nnet import (
    HEAD_BINARY,
    HEAD_IDENTITY,
    HEAD_SOFTMAX,
    MlpSpec,
    forward,
    grad_loss,
    grad_prob,
    init_params,
    param_count,
    predict_prob,
)
from .synthgen import (
    LabeledDataset,
    make_clusters2d,
    make_linear2d,
    make_regression1d,
    make_rings2d,
    make_spirals2d,
    make_xor2d,
    split_by_halfplane,
)
from .trainmap import TrainConfig, TrainDiverged, TrainReport, train_map
from .uq import (
    CovarianceModel,
    SequenceGradients,
    UncertaintyMap,
    aleatoric_point,
    empirical_fisher,
    epistemic_gradient_norm,
    laplace_aleatoric,
    laplace_epistemic,
    normalize_map,
    sequence_aleatoric,
    sequence_epistemic,
    uncertainty_map,
)
from .refpost import (
    HmcConfig,
    HmcDiverged,
    PosteriorLogDensity,
    PosteriorSamples,
    hmc_sample,
    ref_aleatoric,
    ref_epistemic,
)
from .stats import bootstrap_ci, cohens_d, pearson, spearman, welch_t
from .bench import (
    BenchConfig,
    EvalGrid,
    ExperimentReport,
    emit_csv,
    emit_map_image,
    hessian_spectrum,
    run_proxy_bias,
    run_scaling,
    run_validation_classification,
    run_validation_regression,
)

__all__ = [
    "BACKEND",
    "__version__",
    "HEAD_BINARY",
    "HEAD_IDENTITY",
    "HEAD_SOFTMAX",
    "MlpSpec",
    "forward",
    "grad_loss",
    "grad_prob",
    "init_params",
    "param_count",
    "predict_prob",
    "LabeledDataset",
    "make_clusters2d",
    "make_linear2d",
    "make_regression1d",
    "make_rings2d",
    "make_spirals2d",
    "make_xor2d",
    "split_by_halfplane",
    "TrainConfig",
    "TrainDiverged",
    "TrainReport",
    "train_map",
    "CovarianceModel",
    "SequenceGradients",
    "UncertaintyMap",
    "aleatoric_point",
    "empirical_fisher",
    "epistemic_gradient_norm",
    "laplace_aleatoric",
    "laplace_epistemic",
    "normalize_map",
    "sequence_aleatoric",
    "sequence_epistemic",
    "uncertainty_map",
    "HmcConfig",
    "HmcDiverged",
    "PosteriorLogDensity",
    "PosteriorSamples",
    "hmc_sample",
    "ref_aleatoric",
    "ref_epistemic",
    "bootstrap_ci",
    "cohens_d",
    "pearson",
    "spearman",
    "welch_t",
    "BenchConfig",
    "EvalGrid",
    "ExperimentReport",
    "emit_csv",
    "emit_map_image",
    "hessian_spectrum",
    "run_proxy_bias",
    "run_scaling",
    "run_validation_classification",
    "run_validation_regression",
]
