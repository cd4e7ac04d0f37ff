"""Rescaled Gaussian process priors: covariance kernels, RKHS constructions,
small-ball estimates and posterior contraction experiments."""
from .processes import (
    GaussianPrior,
    ModifiedIbm,
    PathSample,
    RescaledStationary,
    SpectralFamily,
    SpectralMeasure,
    StationaryKernel,
    ibm_covariance,
    make_rng,
    prior_covariance_matrix,
    rescale,
    sample_paths,
    spectral_density,
    stationary_covariance,
)
from .rkhs import (
    ConcentrationEstimate,
    EntropyNet,
    GridFunction,
    KernelSections,
    SmoothingKernelPsi,
    concentration_estimate,
    entropy_net,
    holder_approx,
    ibm_approx,
    net_covers,
    rkhs_norm_finite,
    sobolev_rkhs_norm,
    spectral_transform,
)
from .smallball import BoundFit, SmallBallEstimate, bound_fit, smallball_mc
from .inference import (
    ClassificationData,
    DensityModel,
    McmcConfig,
    PosteriorSummary,
    RegressionData,
    classification_posterior,
    density_posterior,
    hellinger,
    logistic,
    regression_posterior,
    regression_posterior_sigma,
)
from .experiments import (
    RateFit,
    SmoothTruth,
    contraction_experiment,
    make_truth,
    rate_fit,
    scaling_rule,
)

__version__ = "0.1.0"

__all__ = [
    "BoundFit",
    "ClassificationData",
    "ConcentrationEstimate",
    "DensityModel",
    "EntropyNet",
    "GaussianPrior",
    "GridFunction",
    "KernelSections",
    "McmcConfig",
    "ModifiedIbm",
    "PathSample",
    "PosteriorSummary",
    "RateFit",
    "RegressionData",
    "RescaledStationary",
    "SmallBallEstimate",
    "SmoothTruth",
    "SmoothingKernelPsi",
    "SpectralFamily",
    "SpectralMeasure",
    "StationaryKernel",
    "bound_fit",
    "classification_posterior",
    "concentration_estimate",
    "contraction_experiment",
    "density_posterior",
    "entropy_net",
    "hellinger",
    "holder_approx",
    "ibm_approx",
    "ibm_covariance",
    "logistic",
    "make_rng",
    "make_truth",
    "net_covers",
    "prior_covariance_matrix",
    "rate_fit",
    "regression_posterior",
    "regression_posterior_sigma",
    "rescale",
    "rkhs_norm_finite",
    "sample_paths",
    "scaling_rule",
    "smallball_mc",
    "sobolev_rkhs_norm",
    "spectral_density",
    "spectral_transform",
    "stationary_covariance",
]
