"""The outer estimation loop and post-fit analysis.

Each cycle: build the likelihood matrix on the current grid, optimize the
weights, condense away negligible-weight points, remove linearly dependent
columns (which caps the support at the population size), re-optimize, and
record the cycle. The loop stops once the log likelihood moved by less than
``delta_f`` over a full cycle *and* the expansion step produced no accepted
candidates; expansion finding new points always continues the loop.

:func:`fixed_grid_npml` is the refinement-free baseline (one weight
optimization over a static dense grid); it doubles as a correctness oracle
because the dense-grid optimum lower-bounds what refinement must achieve.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import time

import numpy as np

from .data import CycleRecord, DiscreteDistribution, ParameterSpace, Population, PsiMatrix
from .exceptions import ConvergenceFailureError
from .likelihood import ErrorModel, LikelihoodEvaluator
from .models import ModelSpec
from .refine import RefinementConfig, condense, dopt, reduce_support
from .sampling import init_grid, sobol_points
from .weights import pdip_weights

# Rounds of the final condense/re-optimize polish; each round strictly
# shrinks the support, so the cap is never reached in practice.
_MAX_POLISH = 10

# Finest expansion-search scale (normalized units). Support precision at the
# floor is a few times finer than the floor itself, which already puts the
# directional derivative at the support within solver tolerance of zero;
# searching below it buys cycles, not likelihood.
_SPREAD_FLOOR = 1e-3


@dataclass(frozen=True)
class FitConfig:
    """Everything that determines a fit besides the data and the box."""

    model: ModelSpec
    error: ErrorModel
    init_points: int
    seed: int = 0
    max_cycles: int = 1000
    delta_f: float = 1e-4
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    pdip_tol: float = 1e-8
    scramble_grid: bool = False  # opt-in; default grid is the unscrambled sequence

    def __post_init__(self):
        if self.init_points < 1:
            raise ValueError("init_points must be >= 1")
        if self.delta_f <= 0.0:
            raise ValueError("delta_f must be positive")
        if self.max_cycles < 0:
            raise ValueError("max_cycles must be >= 0")


@dataclass(frozen=True)
class OptimalityCertificate:
    """Largest directional derivative found by probing the final distribution."""

    max_d_probe: float
    n_probes: int


@dataclass(frozen=True)
class WeightedStats:
    """Moments of a discrete distribution, weighted by the point masses."""

    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray
    median: np.ndarray


@dataclass(frozen=True)
class FitResult:
    distribution: DiscreteDistribution
    log_likelihood: float
    cycles: tuple[CycleRecord, ...]
    converged: bool
    optimality: OptimalityCertificate | None = None

    def with_optimality(self, max_d_probe: float, n_probes: int) -> "FitResult":
        return replace(self, optimality=OptimalityCertificate(max_d_probe, n_probes))


def _optimize(psi: PsiMatrix, tol: float):
    return pdip_weights(psi, tol=tol)


def _prune(grid: np.ndarray, psi: PsiMatrix, weights: np.ndarray,
           cfg: RefinementConfig, tol: float):
    """condense -> reduce -> re-optimize; returns (grid, psi, solution)."""
    kept = condense(grid, weights, cfg.delta_lambda)
    grid, psi = grid[kept], psi.take_columns(kept)
    grid, psi = reduce_support(psi, grid, cfg.qr_ratio_threshold)
    return grid, psi, _optimize(psi, tol)


def fit_npod(population: Population, space: ParameterSpace, config: FitConfig,
             threads: int = 1) -> FitResult:
    """Estimate the maximum-likelihood mixing distribution.

    Deterministic for a fixed (population, space, config): the initial grid,
    the weight optimizer, and the expansion search are all deterministic.
    Raises :class:`~npml.exceptions.InfeasibleSubjectError` when some subject
    has zero likelihood everywhere on the initial grid.
    """
    if space.dim != config.model.n_free:
        raise ValueError(
            f"space has dimension {space.dim} but model {config.model.kind} has "
            f"{config.model.n_free} free parameters {config.model.free_names}")
    evaluator = LikelihoodEvaluator(population, config.model, config.error, threads=threads)
    cfg = config.refinement
    grid = init_grid(space, config.init_points,
                     config.seed if config.scramble_grid else None)

    # The expansion search scale. Likelihood spikes are far narrower than the
    # box, so a fixed simplex spread either overshoots them early or cannot
    # reach them late; instead the spread halves whenever a cycle settles
    # without accepting new points, and convergence is declared only once the
    # spread has reached the floor.
    spread = cfg.nm_initial_spread
    spread_floor = min(spread, max(2.0 * cfg.delta_d, _SPREAD_FLOOR))

    records: list[CycleRecord] = []
    previous_ll: float | None = None
    converged = False
    cycle = 0
    while True:
        cycle += 1
        started = time.perf_counter()
        psi = evaluator.build_psi(grid)
        try:
            solution = _optimize(psi, config.pdip_tol)
            grid, psi, solution = _prune(grid, psi, solution.weights, cfg, config.pdip_tol)
        except ConvergenceFailureError as e:
            # Cycle log persists on error exits for debuggability.
            wrapped = ConvergenceFailureError(f"cycle {cycle}: {e}", best=e.best, cycle=cycle)
            wrapped.cycle_records = tuple(records)
            raise wrapped from e
        records.append(CycleRecord(cycle, solution.log_likelihood, len(grid),
                                   int(round(1000.0 * (time.perf_counter() - started)))))
        if cycle > config.max_cycles:
            break
        settled = previous_ll is not None and abs(solution.log_likelihood - previous_ll) < config.delta_f
        expanded = dopt(grid, solution.weights, psi, space,
                        replace(cfg, nm_initial_spread=spread),
                        population, config.model, config.error)
        # Nothing new at this scale: cascade through finer scales within the
        # same cycle (grid and weights are unchanged, so the search state is
        # identical and rebuilding psi would be wasted work).
        while len(expanded) == len(grid) and spread / 2.0 >= spread_floor:
            spread /= 2.0
            expanded = dopt(grid, solution.weights, psi, space,
                            replace(cfg, nm_initial_spread=spread),
                            population, config.model, config.error)
        if settled and len(expanded) == len(grid):
            converged = True
            break
        previous_ll = solution.log_likelihood
        grid = expanded

    # Final polish: drop any support point whose re-optimized weight fell
    # below the condense cut, so the optimality certificate covers every
    # point of the returned distribution.
    for _ in range(_MAX_POLISH):
        kept = condense(grid, solution.weights, cfg.delta_lambda)
        if len(kept) == len(grid):
            break
        grid = grid[kept]
        psi = psi.take_columns(kept)
        solution = _optimize(psi, config.pdip_tol)

    distribution = DiscreteDistribution.from_arrays(grid, solution.weights / solution.weights.sum())
    return FitResult(distribution=distribution,
                     log_likelihood=solution.log_likelihood,
                     cycles=tuple(records),
                     converged=converged)


def fixed_grid_npml(population: Population, space: ParameterSpace, grid_size: int,
                    model: ModelSpec, error: ErrorModel, threads: int = 1,
                    pdip_tol: float = 1e-8,
                    delta_lambda: float = 1e-3) -> tuple[DiscreteDistribution, float]:
    """One weight optimization over a static Sobol grid, no refinement.

    Returns the condensed distribution and the full-grid optimal log
    likelihood. Dense grids make this a lower-bound oracle for the refining
    estimator.
    """
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    evaluator = LikelihoodEvaluator(population, model, error, threads=threads)
    grid = init_grid(space, grid_size)
    psi = evaluator.build_psi(grid)
    solution = pdip_weights(psi, tol=pdip_tol)
    kept = condense(grid, solution.weights, delta_lambda)
    weights = solution.weights[kept]
    distribution = DiscreteDistribution.from_arrays(grid[kept], weights / weights.sum())
    return distribution, solution.log_likelihood


def optimality_check(result: FitResult, population: Population, space: ParameterSpace,
                     model: ModelSpec, error: ErrorModel, n_probes: int = 10_000,
                     threads: int = 1) -> float:
    """Largest directional derivative over fresh Sobol probes plus the support.

    A value near zero certifies (necessarily and sufficiently) that the fitted
    distribution is the global maximizer; run it once, after convergence.
    """
    evaluator = LikelihoodEvaluator(population, model, error, threads=threads)
    coords = result.distribution.coords_array()
    psi = evaluator.build_psi(coords)
    log_mixture = psi.log_mixture(result.distribution.weights)
    probes = space.denormalize(sobol_points(space.dim, n_probes)) if n_probes > 0 else np.empty((0, space.dim))
    batch = np.vstack([probes, coords])
    return float(evaluator.d_values(batch, log_mixture).max())


def weighted_stats(distribution: DiscreteDistribution) -> WeightedStats:
    """Weighted mean, variance, covariance, and median of a discrete distribution.

    The weighted median per dimension is the smallest coordinate whose
    cumulative weight reaches one half.
    """
    coords = distribution.coords_array()
    w = distribution.weights
    mean = w @ coords
    centered = coords - mean
    covariance = (w[:, None] * centered).T @ centered
    medians = []
    for j in range(coords.shape[1]):
        order = np.argsort(coords[:, j], kind="stable")
        cumulative = np.cumsum(w[order])
        medians.append(coords[order, j][int(np.searchsorted(cumulative, 0.5))])
    return WeightedStats(mean=mean, variance=np.diag(covariance).copy(),
                         covariance=covariance, median=np.array(medians))
