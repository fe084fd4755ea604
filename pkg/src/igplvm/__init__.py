"""Latent variable models with learned correlated noise, and causal analysis of the noise.

The observed sequence ``Y`` (``D x N``) is modeled as a smooth function of a
low-dimensional latent trajectory plus noise with an arbitrary covariance.
The estimated noise is then analysed for linear causal structure.
"""
__version__ = "0.1.0"

from .approach1 import ModelA1, closed_form_Ltilde, fit_a1, loglik_a1, profile_loglik_a1, reconstruct_a1
from .approach2 import ModelA2, fit_a2, loglik_a2, reconstruct_a2
from .causal import (CausalReport, amari_index, discover, edge_metrics, fastica, gaussianity_test,
                     lingam_from_unmixing, mse_g, precision_network, prune_influences)
from .data import FitConfig, ObservationMatrix, center, pca_init
from .dynamics import DynamicsParams, dyn_log_prior
from .errors import DomainError, KernelError, NonLingamError
from .gplvm import GplvmModel, fit_gplvm, loglik_gplvm, posterior_mean_and_residuals
from .kernels import ObservationKernelParams, kernel_partials, rbf_plus_unit_noise, rbf_unit_amplitude
from .models import VARIANTS, fit_dynamic, fit_model, reconstruct
from .optim import ScgConfig, check_gradient, scg_maximize, scg_minimize
from .simgen import SimSpec, evaluate_run, generate
