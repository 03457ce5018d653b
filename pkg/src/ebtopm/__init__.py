"""Empirical Bayes top-m selection under heteroskedastic Gaussian noise."""

from ._backend import BACKEND
from .errors import DegeneratePriorError, DomainError, InputError, NumericalError
from .estimation import (
    FitDiagnostics,
    GridSpec,
    default_atom_grid,
    default_scale_grid,
    fit_normal,
    fit_npmle,
    fit_scale_mixture,
    log_likelihood,
    mle_location,
)
from .priors import (
    DiscretePrior,
    NormalPrior,
    Observation,
    ScaleMixturePrior,
    marginal_log_density,
    posterior_mean,
    posterior_mean_quadrature,
    posterior_variance,
    prior_cdf,
    sample_prior,
    wasserstein1,
)
from .selection import RegretReport, SelectionOutcome, decompose, regret, score_units, select_top_m

__version__ = "0.1.0"
