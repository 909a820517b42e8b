"""Gaussian-process regression that fits positive datapairs while steering
away from negative ones, with exact and sparse variational backends."""

from .data import Dataset, load_csv, metrics, shuffle_negatives, split_standardize
from .errors import (
    GPNDError,
    InvalidInputError,
    NumericalError,
    TrainingError,
)
from .exact_gp import ExactBackend, PredictiveDistribution, marginal_nll, posterior
from .kernel import KernelParams, gram, gram_grads, rbf_eval
from .negcon import NegativeSet, combined_objective, gaussian_kl, nd_penalty
from .svgp import SparseBackend, SparseParams, VariationalParams, elbo, svgp_posterior
from .trainer import FitReport, TrainConfig, fit

__version__ = "0.1.0"
