"""Observation noise models and conditional likelihoods.

Measurement noise is Gaussian with standard deviation omega, built in two
stages: an assay error polynomial sigma(y) = c0 + c1*y + c2*y^2 + c3*y^3
evaluated at the observed value, combined with either an additive scalar
(omega = sqrt(sigma^2 + lambda^2)) or a proportional one (omega = sigma *
gamma). Per-subject log densities accumulate in log space throughout;
exponentiation happens only after subtracting each row's maximum, which keeps
subjects with many observations from underflowing double precision.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np

from .data import Population, PsiMatrix, Subject
from .exceptions import InfeasibleSubjectError, NonpositiveOmegaError, NonpositiveSigmaError, NpmlError
from .models import ModelSpec, predict, predict_batch

ADDITIVE = "additive"
PROPORTIONAL = "proportional"

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Largest per-subject log density ratio we exponentiate; beyond this the
# directional derivative saturates and only its ordering matters.
MAX_LOG_RATIO = 700.0


@dataclass(frozen=True)
class ErrorModel:
    """Assay error polynomial plus an additive or proportional noise scalar."""

    poly: tuple[float, float, float, float]
    mode: str = ADDITIVE
    value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "poly", tuple(float(c) for c in self.poly))
        if len(self.poly) != 4:
            raise ValueError("error polynomial takes exactly four coefficients c0..c3")
        if not all(math.isfinite(c) for c in self.poly):
            raise ValueError("error polynomial coefficients must be finite")
        if self.mode not in (ADDITIVE, PROPORTIONAL):
            raise ValueError(f"unknown error mode {self.mode!r}")
        if not math.isfinite(self.value):
            raise ValueError("noise scalar must be finite")
        if self.mode == ADDITIVE and self.value < 0.0:
            raise ValueError("additive noise scalar must be >= 0")
        if self.mode == PROPORTIONAL and self.value <= 0.0:
            raise ValueError("proportional noise scalar must be > 0")


def sigma_poly(error: ErrorModel, y):
    """Assay uncertainty at the observed value(s) ``y``.

    Raises :class:`NonpositiveSigmaError` under the proportional mode when the
    polynomial is not positive, since omega = sigma * gamma would then be
    unusable as a standard deviation.
    """
    c0, c1, c2, c3 = error.poly
    y = np.asarray(y, dtype=float)
    sigma = c0 + c1 * y + c2 * y * y + c3 * y * y * y
    if error.mode == PROPORTIONAL and (sigma <= 0.0).any():
        raise NonpositiveSigmaError(
            f"error polynomial gave sigma <= 0 at y={y[np.argmin(sigma)] if y.ndim else y}"
            " under the proportional mode")
    return sigma if y.ndim else float(sigma)


def omega(sigma, error: ErrorModel, *, allow_zero: bool = False):
    """Combined observation noise from sigma and the model's scalar.

    ``allow_zero`` permits omega == 0 (a degenerate, noise-free observation);
    the simulator uses it so a zero error model reproduces the noiseless
    trajectory. The fitting path keeps the default and rejects omega <= 0.
    """
    sigma = np.asarray(sigma, dtype=float)
    if error.mode == ADDITIVE:
        w = np.sqrt(sigma * sigma + error.value * error.value)
    else:
        w = sigma * error.value
    bad = (w < 0.0) | (~np.isfinite(w)) if allow_zero else (w <= 0.0) | (~np.isfinite(w))
    if bad.any():
        raise NonpositiveOmegaError(f"observation noise omega={w[bad].min() if w.ndim else w} is not positive")
    return w if sigma.ndim else float(w)


def _observation_omegas(subject: Subject, error: ErrorModel) -> np.ndarray:
    try:
        return omega(sigma_poly(error, subject.observation_values), error)
    except NpmlError as e:
        raise type(e)(f"subject {subject.id!r}: {e}") from e


def subject_log_likelihood(subject: Subject, theta, model: ModelSpec, error: ErrorModel) -> float:
    """log p(Y_i | theta): independent Gaussian residuals at the observation times."""
    try:
        pred = predict(model, theta, subject.doses, subject.observation_times).predictions
    except NpmlError as e:
        raise type(e)(f"subject {subject.id!r}: {e}") from e
    w = _observation_omegas(subject, error)
    resid = (subject.observation_values - pred) / w
    return float(-(LOG_SQRT_2PI + np.log(w)).sum() - 0.5 * (resid * resid).sum())


class LikelihoodEvaluator:
    """Vectorized per-population conditional densities.

    Subjects sharing a dose schedule and observation times also share model
    trajectories, so they are grouped once at construction and every
    evaluation computes one (K, T) prediction array per group. Grouping is by
    first appearance and each subject writes its own fixed output row, which
    makes results identical for any thread count.
    """

    def __init__(self, population: Population, model: ModelSpec, error: ErrorModel,
                 threads: int = 1):
        self.population = population
        self.model = model
        self.error = error
        self.threads = max(1, int(threads))
        groups: dict = {}
        for row, subject in enumerate(population):
            key = (subject.doses, tuple(subject.observation_times))
            groups.setdefault(key, []).append(row)
        self._groups = []
        for (doses, times), rows in groups.items():
            y = np.array([population.subjects[r].observation_values for r in rows])
            w = np.array([_observation_omegas(population.subjects[r], self.error) for r in rows])
            const = -(LOG_SQRT_2PI + np.log(w)).sum(axis=1)
            self._groups.append((doses, np.array(times), rows, y, w, const))

    def log_densities(self, thetas) -> np.ndarray:
        """(N, K) matrix of log p(Y_i | theta_k) for a (K, d) batch of points."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.empty((len(self.population), thetas.shape[0]))

        def fill(group):
            doses, times, rows, y, w, const = group
            preds = predict_batch(self.model, thetas, doses, times)
            for j, row in enumerate(rows):
                resid = (y[j] - preds) / w[j]
                out[row] = const[j] - 0.5 * np.einsum("kt,kt->k", resid, resid)

        if self.threads > 1 and len(self._groups) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                list(pool.map(fill, self._groups))
        else:
            for group in self._groups:
                fill(group)
        return out

    def build_psi(self, thetas) -> PsiMatrix:
        logp = self.log_densities(thetas)
        row_max = logp.max(axis=1)
        if not np.isfinite(row_max).all():
            bad = int(np.flatnonzero(~np.isfinite(row_max))[0])
            raise InfeasibleSubjectError(self.population.subjects[bad].id)
        return PsiMatrix(np.exp(logp - row_max[:, None]), row_max)

    def d_values(self, thetas, log_mixture: np.ndarray) -> np.ndarray:
        """Directional derivative of the log likelihood toward each point of a batch.

        ``log_mixture`` holds log p(Y_i | F) for the current mixture; ratios
        are formed in log space so the evaluation is scale-safe.
        """
        logp = self.log_densities(thetas)
        ratios = np.exp(np.minimum(logp - np.asarray(log_mixture)[:, None], MAX_LOG_RATIO))
        return ratios.sum(axis=0) - len(self.population)


def build_psi(population: Population, grid, model: ModelSpec, error: ErrorModel,
              threads: int = 1) -> PsiMatrix:
    """The N x K likelihood matrix over a (K, d) grid of support points.

    Entries are scaled so each row's maximum is exactly 1, with per-row log
    offsets recorded on the result. A subject whose density vanishes at every
    grid point raises :class:`InfeasibleSubjectError`.
    """
    return LikelihoodEvaluator(population, model, error, threads=threads).build_psi(grid)
