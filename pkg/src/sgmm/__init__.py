"""Gaussian mixtures with spatially varying mixing probabilities.

The pipeline has three stages: a feature-only marginal EM, a kernel-weighted
local EM producing a mixing-probability field over locations, and a joint EM
that refines the component parameters with that field plugged in.  Simulators
and clustering metrics reproduce the accompanying simulation studies.
"""

from .density import GaussianComponent, cholesky_logdet, gaussian_logpdf, logsumexp
from .errors import (
    AllNegInfinite,
    DimensionMismatch,
    EmptyCluster,
    EmptyNeighborhood,
    NonFiniteLikelihood,
    NotPositiveDefinite,
    RejectionBudgetExceeded,
    RowMisalignment,
    SgmmError,
    SingleClass,
    ZeroTotalDensity,
)
from .gmm import (
    Dataset,
    FitConfig,
    FitReport,
    MixtureParams,
    em_fit_marginal,
    kmeans_init,
    marginal_loglik,
)
from .joint import SgmmModel, classify, em_fit_joint, fit_full, joint_loglik, posterior
from .local import (
    KernelSpec,
    LocalMixingField,
    default_bandwidth,
    fit_local_mixing,
    kernel_weight,
    local_em_at,
)
from .metrics import (
    AlignedComparison,
    align_components,
    ari,
    auc,
    integrate_to_binary,
    iou,
    mise_mixing,
)
from .simulate import (
    Scenario,
    SpatialGaussianMixture,
    TruncatedGaussian,
    ar_correlation,
    generate,
    sag_scenario,
    sample_truncated_gaussian,
    study1_scenario,
    true_local_mixing,
    true_mixing_field,
)

__all__ = [
    "AlignedComparison",
    "AllNegInfinite",
    "Dataset",
    "DimensionMismatch",
    "EmptyCluster",
    "EmptyNeighborhood",
    "FitConfig",
    "FitReport",
    "GaussianComponent",
    "KernelSpec",
    "LocalMixingField",
    "MixtureParams",
    "NonFiniteLikelihood",
    "NotPositiveDefinite",
    "RejectionBudgetExceeded",
    "RowMisalignment",
    "Scenario",
    "SgmmError",
    "SgmmModel",
    "SingleClass",
    "SpatialGaussianMixture",
    "TruncatedGaussian",
    "ZeroTotalDensity",
    "align_components",
    "ar_correlation",
    "ari",
    "auc",
    "cholesky_logdet",
    "classify",
    "default_bandwidth",
    "em_fit_joint",
    "em_fit_marginal",
    "fit_full",
    "fit_local_mixing",
    "gaussian_logpdf",
    "generate",
    "integrate_to_binary",
    "iou",
    "joint_loglik",
    "kernel_weight",
    "kmeans_init",
    "local_em_at",
    "logsumexp",
    "marginal_loglik",
    "mise_mixing",
    "posterior",
    "sag_scenario",
    "sample_truncated_gaussian",
    "study1_scenario",
    "true_local_mixing",
    "true_mixing_field",
]

__version__ = "0.1.0"
