"""Grid maintenance and exploration kernels.

Each cycle of the estimation loop prunes the support grid and then tries to
grow it where the likelihood says mass is missing:

* :func:`condense` drops points whose weight is a negligible fraction of the
  largest weight.
* :func:`reduce_support` removes columns of Psi outside an orthonormal basis
  of its column space (rank-revealing QR with column pivoting), enforcing the
  at-most-N-support-points bound.
* :func:`d_function` evaluates the directional derivative of the log
  likelihood toward a point mass: D(xi, F) = sum_i P(Y_i|xi)/P(Y_i|F) - N.
  Its maximum is zero exactly at the maximum-likelihood mixing distribution.
* :func:`dopt` runs a fixed number of Nelder-Mead steps uphill on D from every
  current support point and appends the candidates that are genuinely new and
  inside the box.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg

from .data import ParameterSpace, Population, PsiMatrix
from .likelihood import ErrorModel, LikelihoodEvaluator
from .models import ModelSpec

NM_REFLECTION = 1.0
NM_EXPANSION = 2.0
NM_CONTRACTION = 0.5
NM_SHRINK = 0.5


@dataclass(frozen=True)
class RefinementConfig:
    """Thresholds for the prune/reduce/expand kernels."""

    delta_lambda: float = 1e-3       # weight cut as a fraction of max weight
    qr_ratio_threshold: float = 1e-8  # pivot ratio below which a column is dependent
    delta_d: float = 1e-4            # min normalized L1 distance between points
    nm_steps: int = 5                # Nelder-Mead iterations per candidate
    nm_initial_spread: float = 0.1   # initial simplex edge, as fraction of box width

    def __post_init__(self):
        if not (self.delta_lambda > 0.0 and self.qr_ratio_threshold > 0.0 and self.delta_d > 0.0):
            raise ValueError("thresholds must be positive")
        if self.nm_steps < 0:
            raise ValueError("nm_steps must be >= 0")
        if not (0.0 < self.nm_initial_spread <= 1.0):
            raise ValueError("nm_initial_spread must be in (0, 1]")


def condense(points, weights, delta_lambda: float) -> np.ndarray:
    """Indices of points whose weight exceeds ``max(weights) * delta_lambda``.

    Order is preserved; the maximum-weight point always survives, so the
    result is never empty.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if len(points) != weights.size:
        raise ValueError(f"{len(points)} points but {weights.size} weights")
    return np.flatnonzero(weights > weights.max() * delta_lambda)


def reduce_support(psi: PsiMatrix, points,
                   ratio_threshold: float = 1e-8) -> tuple[np.ndarray, PsiMatrix]:
    """Drop support points whose Psi columns are linearly dependent on the rest.

    Columns are normalized to unit Euclidean length, factorized by
    column-pivoted QR, and a pivot column is kept while the ratio
    ``|r[i, i]| / ||r[:, i]||`` stays above ``ratio_threshold``. The kept
    subset (at most min(N, K) columns) is returned in its original relative
    order, together with the matching column subset of ``psi``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if psi.n_points != len(points):
        raise ValueError(f"psi has {psi.n_points} columns but {len(points)} points given")

    norms = np.linalg.norm(psi.values, axis=0)
    nonzero = np.flatnonzero(norms > 0.0)
    if nonzero.size < norms.size:
        warnings.warn(f"dropping {norms.size - nonzero.size} zero-norm psi column(s)",
                      RuntimeWarning, stacklevel=2)
    normalized = psi.values[:, nonzero] / norms[nonzero]

    r, perm = scipy.linalg.qr(normalized, mode="r", pivoting=True)
    keep = []
    for i in range(min(r.shape[0], r.shape[1])):
        column_norm = np.linalg.norm(r[:, i])
        if column_norm > 0.0 and abs(r[i, i]) / column_norm > ratio_threshold:
            keep.append(nonzero[perm[i]])
    keep = np.sort(np.array(keep, dtype=int))
    return points[keep], psi.take_columns(keep)


def d_function(xi, log_mixture, population: Population, model: ModelSpec,
               error: ErrorModel) -> float:
    """Directional derivative of the log likelihood toward a point mass at xi.

    ``log_mixture`` is the vector of log p(Y_i | F) for the current mixture
    (see :meth:`npml.data.PsiMatrix.log_mixture`). Each ratio is formed as
    exp(log p(Y_i | xi) - log p(Y_i | F)), so the evaluation never leaves the
    representable range for viable mixtures.
    """
    return float(d_function_batch(np.atleast_2d(np.asarray(xi, dtype=float)),
                                  log_mixture, population, model, error)[0])


def d_function_batch(xis, log_mixture, population: Population, model: ModelSpec,
                     error: ErrorModel, threads: int = 1) -> np.ndarray:
    """Vectorized :func:`d_function` over a (M, d) batch of probe points."""
    evaluator = LikelihoodEvaluator(population, model, error, threads=threads)
    return evaluator.d_values(np.atleast_2d(np.asarray(xis, dtype=float)),
                              np.asarray(log_mixture, dtype=float))


def nelder_mead_t(f, x0, t: int, spread: float = 0.1) -> np.ndarray:
    """Run exactly ``t`` Nelder-Mead iterations maximizing ``f`` over the unit cube.

    One iteration is one reflect/expand/contract/shrink decision. The initial
    simplex places one vertex at ``x0`` and one at ``x0 + spread * e_j`` per
    dimension, mirrored to ``x0 - spread * e_j`` when stepping up would leave
    the cube. Trial points are clamped into the cube before evaluation (the
    vertex itself keeps its unclamped position), so the returned best vertex
    is never worse than ``f(x0)``; with ``t == 0`` it is ``x0`` itself.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size

    def evaluate(x):
        return float(f(np.clip(x, 0.0, 1.0)))

    simplex = [x0.copy()]
    for j in range(d):
        step = np.zeros(d)
        step[j] = spread if x0[j] + spread <= 1.0 else -spread
        simplex.append(x0 + step)
    simplex = np.array(simplex)
    values = np.array([evaluate(v) for v in simplex])

    for _ in range(t):
        order = np.argsort(-values, kind="stable")
        simplex, values = simplex[order], values[order]
        best, second_worst, worst = values[0], values[-2], values[-1]
        centroid = simplex[:-1].mean(axis=0)

        reflected = centroid + NM_REFLECTION * (centroid - simplex[-1])
        f_reflected = evaluate(reflected)
        if f_reflected > best:
            expanded = centroid + NM_EXPANSION * (centroid - simplex[-1])
            f_expanded = evaluate(expanded)
            if f_expanded > f_reflected:
                simplex[-1], values[-1] = expanded, f_expanded
            else:
                simplex[-1], values[-1] = reflected, f_reflected
        elif f_reflected > second_worst:
            simplex[-1], values[-1] = reflected, f_reflected
        else:
            if f_reflected > worst:
                contracted = centroid + NM_CONTRACTION * (reflected - centroid)
                f_contracted = evaluate(contracted)
                accept = f_contracted >= f_reflected
            else:
                contracted = centroid + NM_CONTRACTION * (simplex[-1] - centroid)
                f_contracted = evaluate(contracted)
                accept = f_contracted > worst
            if accept:
                simplex[-1], values[-1] = contracted, f_contracted
            else:
                for i in range(1, len(simplex)):
                    simplex[i] = simplex[0] + NM_SHRINK * (simplex[i] - simplex[0])
                    values[i] = evaluate(simplex[i])

    return simplex[int(np.argmax(values))]


def dopt(points, weights, psi: PsiMatrix, space: ParameterSpace, config: RefinementConfig,
         population: Population, model: ModelSpec, error: ErrorModel) -> np.ndarray:
    """Expand the grid by short Nelder-Mead ascents of the directional derivative.

    For every current point, a ``config.nm_steps``-iteration Nelder-Mead run
    maximizes D(., F) in the normalized cube starting from that point. A
    candidate is appended when its normalized L1 distance to every existing
    and already-accepted point exceeds ``config.delta_d`` and it lies inside
    the box. The input points always form a prefix of the output, so the grid
    at most doubles.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    evaluator = LikelihoodEvaluator(population, model, error)
    # p(Y_i | F) is fixed within a cycle; compute it once and share.
    log_mixture = psi.log_mixture(weights)

    def objective(unit):
        return evaluator.d_values(space.denormalize(unit)[None, :], log_mixture)[0]

    width = space.width
    accepted: list[np.ndarray] = []
    for x0 in space.normalize(points):
        candidate_unit = nelder_mead_t(objective, x0, config.nm_steps, config.nm_initial_spread)
        candidate = space.denormalize(candidate_unit)
        inside = (candidate >= space.lower).all() and (candidate <= space.upper).all()
        rivals = np.vstack([points, *accepted]) if accepted else points
        distance = float((np.abs(rivals - candidate) / width).sum(axis=1).min())
        if inside and distance > config.delta_d:
            accepted.append(candidate)
    if not accepted:
        return points.copy()
    return np.vstack([points, *accepted])
