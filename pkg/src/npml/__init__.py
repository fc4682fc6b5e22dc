"""Nonparametric maximum-likelihood estimation of mixing distributions for
population pharmacokinetics, using directional-derivative-guided support
refinement."""

__version__ = "0.1.0"

from .data import (CycleRecord, DiscreteDistribution, DoseEvent, ObservationEvent,
                   ParameterSpace, Population, PsiMatrix, Subject, SupportPoint,
                   denormalize_point, normalize_point)
from .driver import (FitConfig, FitResult, OptimalityCertificate, WeightedStats,
                     fit_npod, fixed_grid_npml, optimality_check, weighted_stats)
from .exceptions import (BoundsViolationError, ConfigError, ConvergenceFailureError,
                         DegeneratePsiError, InfeasibleSubjectError,
                         IntegrationFailureError, ModelDomainError,
                         NonpositiveOmegaError, NonpositiveSigmaError, NpmlError,
                         ParseError)
from .likelihood import (ErrorModel, LikelihoodEvaluator, build_psi, omega,
                         sigma_poly, subject_log_likelihood)
from .models import (ModelSpec, Trajectory, integrate_ode, predict, predict_batch,
                     predict_one_comp_iv, predict_two_comp_oral_lag)
from .refine import (RefinementConfig, condense, d_function, d_function_batch, dopt,
                     nelder_mead_t, reduce_support)
from .sampling import (MixtureComponent, SimulationSpec, init_grid, simulate_population,
                       sobol_points)
from .weights import WeightSolution, pdip_weights

__all__ = [name for name in dir() if not name.startswith("_")]
