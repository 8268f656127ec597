"""Shaping activity in networks of mutually exciting (Hawkes) point processes."""

from .estimate import FitOptions, FitResult, fit_exogenous, fit_mle, ll_gradient, log_likelihood, select_omega
from .evaluate import (BASELINES, HeldoutResult, baseline_allocate, evaluate_simulated, evaluate_theoretical,
                       heldout_rank_correlation, pagerank, rank_correlation)
from .exceptions import *  # noqa: F401,F403
from .model import BudgetSpec, Cascade, EventLog, HawkesNetwork, IntensityCurve, ShapingTask, validate_network
from .psi import (expm_action, gmres_solve, psi_apply, psi_dense, psi_series_oracle, psi_transpose_apply,
                  spectral_radius, stationary_intensity)
from .shape import SolveOptions, SolveReport, objective_and_gradient, pgd_solve, project_feasible, sparsity_sweep
from .simulate import empirical_intensity, generation_counts, simulate_cascades, simulate_hawkes, window_counts
from .synth import random_network

__version__ = "0.1.0"
