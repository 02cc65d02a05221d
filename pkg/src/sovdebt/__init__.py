"""Optimal sovereign debt management under bankruptcy risk and devaluation.

Library layout:

- model: parameters and the L/c/rho/theta function families with validation
- hamiltonian: H(x, xi, p), closed-form minimizers, gradient, bounds
- solver: coupled value/bond steady-state solver with eps-continuation
- analysis: certified constants, bound curves, regime classification,
  solution verification
- montecarlo: reproducible path simulation, cost/bond estimation,
  Nash-deviation tests
- config/cli: INI run configurations and the file-based command workflows
"""

from .model import (CostSpec, ModelParams, RegularizedRisk, RiskSpec,
                    SalvageSpec, ValidationReport, regularize_rho,
                    validate_params)
from .hamiltonian import (BoundConstants, HamiltonianEval, bound_K1,
                          bound_constants, eval_H, theta_min, u_tilde, v_tilde)
from .solver import (ContinuationTrace, Grid, InstabilityDetected,
                     NonConvergence, Solution, SolverConfig,
                     continuation_solve, extract_feedback, load_solution,
                     residual, save_solution, solve_regularized)
from .analysis import (BoundsReport, RegimeClassification, VerificationReport,
                       classify_regime, compute_beta, compute_beta_star,
                       compute_constants, find_x_diamond, subsolution_p_minus,
                       subsolution_V2, supersolution_V1, supersolution_V1_curve,
                       verify_solution)
from .montecarlo import (FeedbackPolicy, McEstimate, PathOutcome, Perturbation,
                         SimConfig, bankruptcy_times_ks, default_horizon,
                         deviation_test, estimate_both, estimate_bond_price,
                         estimate_value, simulate_path, simulate_paths)
from .config import ConfigError, RunConfig, load_config
from .presets import base_setup, regime1_setup, regime2_setup

__version__ = "0.1.0"
