"""Core value types: dosing and observation events, populations, parameter
boxes, discrete mixing distributions, and the row-scaled conditional
likelihood matrix.

All types are immutable after construction and validate their invariants in
``__post_init__``, so any instance floating around the codebase is a valid
one. Times are in hours, dose amounts in abstract units, and concentrations
in units per volume.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import BoundsViolationError

ROUTE_INFUSION = "infusion"
ROUTE_ORAL = "oral"
ROUTES = (ROUTE_INFUSION, ROUTE_ORAL)

# Discrete distributions must sum to one within this absolute slack.
SIMPLEX_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DoseEvent:
    """One dose: an infusion of ``duration`` hours, or a bolus if duration is 0."""

    time: float
    amount: float
    duration: float = 0.0
    route: str = ROUTE_INFUSION

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time >= 0.0):
            raise ValueError(f"dose time must be finite and >= 0, got {self.time}")
        if not (math.isfinite(self.amount) and self.amount > 0.0):
            raise ValueError(f"dose amount must be positive, got {self.amount}")
        if not (math.isfinite(self.duration) and self.duration >= 0.0):
            raise ValueError(f"dose duration must be >= 0, got {self.duration}")
        if self.route not in ROUTES:
            raise ValueError(f"unknown route {self.route!r}, expected one of {ROUTES}")


@dataclass(frozen=True)
class ObservationEvent:
    """A measured concentration at a point in time."""

    time: float
    value: float
    output_index: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time >= 0.0):
            raise ValueError(f"observation time must be finite and >= 0, got {self.time}")
        if not math.isfinite(self.value):
            raise ValueError(f"observation value must be finite, got {self.value}")
        if self.output_index != 0:
            raise ValueError("only output_index 0 is supported")


@dataclass(frozen=True)
class Subject:
    """One individual's dosing history and observations."""

    id: str
    doses: tuple[DoseEvent, ...]
    observations: tuple[ObservationEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "doses", tuple(self.doses))
        object.__setattr__(self, "observations", tuple(self.observations))
        if not self.id:
            raise ValueError("subject id must be non-empty")
        if len(self.observations) < 1:
            raise ValueError(f"subject {self.id!r} has no observations")
        for events, label in ((self.doses, "doses"), (self.observations, "observations")):
            times = [e.time for e in events]
            if any(b < a for a, b in zip(times, times[1:])):
                raise ValueError(f"subject {self.id!r}: {label} not sorted by time")

    @property
    def observation_times(self) -> np.ndarray:
        return np.array([o.time for o in self.observations])

    @property
    def observation_values(self) -> np.ndarray:
        return np.array([o.value for o in self.observations])


@dataclass(frozen=True)
class Population:
    """An ordered collection of subjects with unique ids."""

    subjects: tuple[Subject, ...]

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        if len(self.subjects) < 1:
            raise ValueError("population must contain at least one subject")
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate subject ids: {dupes}")

    def __len__(self) -> int:
        return len(self.subjects)

    def __iter__(self) -> Iterator[Subject]:
        return iter(self.subjects)


@dataclass(frozen=True)
class ParameterSpace:
    """The bounded box the mixing distribution lives on."""

    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", _readonly(self.lower))
        object.__setattr__(self, "upper", _readonly(self.upper))
        d = len(self.names)
        if d == 0:
            raise ValueError("parameter space must have at least one dimension")
        if self.lower.shape != (d,) or self.upper.shape != (d,):
            raise ValueError("bounds must be vectors matching the number of names")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise ValueError("bounds must be finite")
        if not (self.lower < self.upper).all():
            bad = [self.names[j] for j in np.flatnonzero(~(self.lower < self.upper))]
            raise ValueError(f"lower bound must be strictly below upper for {bad}")

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, coords) -> bool:
        c = np.asarray(coords, dtype=float)
        return bool((c >= self.lower).all() and (c <= self.upper).all())

    def normalize(self, coords) -> np.ndarray:
        """Map box coordinates to the unit cube. Works on (d,) or (K, d) arrays."""
        return (np.asarray(coords, dtype=float) - self.lower) / self.width

    def denormalize(self, unit) -> np.ndarray:
        """Exact inverse of :meth:`normalize` up to floating round-off."""
        return self.lower + np.asarray(unit, dtype=float) * self.width


@dataclass(frozen=True)
class SupportPoint:
    """A candidate parameter vector carrying probability weight."""

    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        if not all(math.isfinite(c) for c in self.coords):
            raise ValueError("support point coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array(self.coords)


def normalize_point(point: SupportPoint, space: ParameterSpace) -> np.ndarray:
    """Bounds-checked map of a support point into the unit cube."""
    c = point.as_array()
    if c.shape != (space.dim,):
        raise BoundsViolationError(
            f"point has dimension {c.size}, space has dimension {space.dim}")
    if not space.contains(c):
        raise BoundsViolationError(
            f"point {tuple(c)} outside bounds [{tuple(space.lower)}, {tuple(space.upper)}]")
    return space.normalize(c)


def denormalize_point(unit, space: ParameterSpace) -> SupportPoint:
    """Inverse of :func:`normalize_point`."""
    u = np.asarray(unit, dtype=float)
    if u.shape != (space.dim,):
        raise BoundsViolationError(
            f"unit vector has dimension {u.size}, space has dimension {space.dim}")
    return SupportPoint(tuple(space.denormalize(u)))


@dataclass(frozen=True)
class DiscreteDistribution:
    """Support points plus simplex weights; the estimate of the mixing distribution."""

    points: tuple[SupportPoint, ...]
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "weights", _readonly(self.weights))
        k = len(self.points)
        if k < 1:
            raise ValueError("distribution needs at least one support point")
        if self.weights.shape != (k,):
            raise ValueError(f"{k} points but {self.weights.shape} weights")
        if not np.isfinite(self.weights).all():
            raise ValueError("weights must be finite")
        if (self.weights < 0.0).any():
            raise ValueError("weights must be non-negative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"weights must sum to 1 within {SIMPLEX_TOL}, got {total!r}")
        dims = {len(p.coords) for p in self.points}
        if len(dims) != 1:
            raise ValueError("support points have mixed dimensions")

    @classmethod
    def from_arrays(cls, coords, weights) -> "DiscreteDistribution":
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        return cls(tuple(SupportPoint(tuple(row)) for row in coords), np.asarray(weights, dtype=float))

    @property
    def n_points(self) -> int:
        return len(self.points)

    def coords_array(self) -> np.ndarray:
        """Support points as a (K, d) array."""
        return np.array([p.coords for p in self.points])


@dataclass(frozen=True)
class PsiMatrix:
    """N x K matrix of per-subject conditional likelihoods, scaled per row.

    ``values[i, k]`` is p(Y_i | theta_k) divided by the row's largest density,
    so entries stay representable even when raw densities underflow double
    precision. The true log density is recovered as
    ``log(values[i, k]) + row_log_scale[i]``.
    """

    values: np.ndarray
    row_log_scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        object.__setattr__(self, "row_log_scale", _readonly(self.row_log_scale))
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        n, _ = self.values.shape
        if self.row_log_scale.shape != (n,):
            raise ValueError("row_log_scale must have one entry per row")
        if not np.isfinite(self.values).all():
            raise ValueError("values must be finite")
        if (self.values < 0.0).any():
            raise ValueError("values must be non-negative")
        if (self.values.max(axis=1) == 0.0).any():
            bad = int(np.flatnonzero(self.values.max(axis=1) == 0.0)[0])
            raise ValueError(f"row {bad} is identically zero (infeasible subject)")

    @classmethod
    def from_log_densities(cls, log_densities: np.ndarray) -> "PsiMatrix":
        """Scale an (N, K) matrix of log densities so every row's max entry is 1."""
        logp = np.asarray(log_densities, dtype=float)
        row_max = logp.max(axis=1)
        if not np.isfinite(row_max).all():
            bad = int(np.flatnonzero(~np.isfinite(row_max))[0])
            raise ValueError(f"row {bad} has no finite log density")
        return cls(np.exp(logp - row_max[:, None]), row_max)

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    def log_densities(self) -> np.ndarray:
        """Reconstructed (N, K) matrix of log p(Y_i | theta_k)."""
        with np.errstate(divide="ignore"):
            return np.log(self.values) + self.row_log_scale[:, None]

    def log_mixture(self, weights: np.ndarray) -> np.ndarray:
        """log p(Y_i | F) for the mixture with the given simplex weights."""
        mix = self.values @ np.asarray(weights, dtype=float)
        if (mix <= 0.0).any():
            bad = int(np.flatnonzero(mix <= 0.0)[0])
            raise ValueError(f"mixture density for row {bad} is not positive")
        return np.log(mix) + self.row_log_scale

    def take_columns(self, indices) -> "PsiMatrix":
        """Column subset (same row scaling); row maxima may drop below 1."""
        idx = np.asarray(indices, dtype=int)
        return PsiMatrix(self.values[:, idx], self.row_log_scale)


@dataclass(frozen=True)
class CycleRecord:
    """Bookkeeping for one estimation cycle."""

    cycle: int
    log_likelihood: float
    n_points_after_reduce: int
    wall_time_ms: int
