"""Integrated rotated Gaussian approximation for linear models with nuisance terms."""
from .algorithm import (
    IrgaResult,
    NuisanceEstimator,
    SelectionProblem,
    SelectionResult,
    irga_fit,
    select_all,
    select_blocks,
)
from .exact import (
    BetaPosterior,
    GaussianPosterior,
    NuisanceSummary,
    beta_posterior,
    exact_selection_oracle,
    gaussian_beta_posterior,
    gprior_log_marginal,
    inclusion_probs,
)
from .gp import GpConfig, LaplaceFit, gp_laplace_fit, gp_nuisance_summary
from .priors import GaussianPrior, GPrior, SpikeSlabPrior, spike_slab_denoise
from .rotation import Dataset, RotationSplit, compute_rotation, rotate
from .vamp import AlphaPosteriorSummary, VampConfig, vamp_fit

__version__ = "0.1.0"
