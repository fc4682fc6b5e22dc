"""Quasi-random grid initialization and cohort simulation.

The Sobol generator is self-contained: direction numbers come from the
published Joe-Kuo table (dimensions up to 32), points are produced in
Gray-code order at 32-bit resolution, and the all-zeros point at index 0 is
skipped so the sequence opens at (0.5, ..., 0.5). The unscrambled sequence is
the default because seeded runs must be bit-stable across machines and
languages; hash-based Owen-style scrambling is available by passing a seed.

Simulation draws each subject from an independent counter-based random
stream keyed by (seed, subject index), so any subset of subjects is
reproducible in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Sequence, Union

import numpy as np

from .data import (DiscreteDistribution, DoseEvent, ObservationEvent, ParameterSpace,
                   Population, Subject)
from .likelihood import ErrorModel, omega, sigma_poly
from .models import ModelSpec, predict

MAX_DIMENSION = 32
_BITS = 32

# Joe-Kuo direction-number table for dimensions 2..32: (primitive polynomial
# encoded as a bit string including leading and trailing 1, initial m values).
# Dimension 1 is the van der Corput sequence (all m = 1).
_JOE_KUO = (
    (3, (1,)),
    (7, (1, 3)),
    (11, (1, 3, 1)),
    (13, (1, 1, 1)),
    (19, (1, 1, 3, 3)),
    (25, (1, 3, 5, 13)),
    (37, (1, 1, 5, 5, 17)),
    (41, (1, 1, 5, 5, 5)),
    (47, (1, 1, 7, 11, 19)),
    (55, (1, 1, 5, 1, 1)),
    (59, (1, 1, 1, 3, 11)),
    (61, (1, 3, 5, 5, 31)),
    (67, (1, 3, 3, 9, 7, 49)),
    (91, (1, 1, 1, 15, 21, 21)),
    (97, (1, 3, 1, 13, 27, 49)),
    (103, (1, 1, 1, 15, 7, 5)),
    (109, (1, 3, 1, 15, 13, 25)),
    (115, (1, 1, 5, 5, 19, 61)),
    (131, (1, 3, 7, 11, 23, 15, 103)),
    (137, (1, 3, 7, 13, 13, 15, 69)),
    (143, (1, 1, 3, 13, 7, 35, 63)),
    (145, (1, 3, 5, 9, 1, 25, 53)),
    (157, (1, 3, 1, 13, 9, 35, 107)),
    (167, (1, 3, 1, 5, 27, 61, 31)),
    (171, (1, 1, 5, 11, 19, 41, 61)),
    (185, (1, 3, 5, 3, 3, 13, 69)),
    (191, (1, 1, 7, 13, 1, 19, 1)),
    (193, (1, 3, 7, 5, 13, 19, 59)),
    (203, (1, 1, 3, 9, 25, 29, 41)),
    (211, (1, 3, 5, 13, 23, 1, 55)),
    (213, (1, 3, 7, 3, 13, 59, 17)),
)


def _direction_matrix(dimension: int) -> np.ndarray:
    """(d, _BITS) matrix of direction numbers as left-aligned 32-bit integers."""
    v = np.zeros((dimension, _BITS), dtype=np.uint64)
    v[0] = [1 << (_BITS - j) for j in range(1, _BITS + 1)]
    for dim in range(1, dimension):
        p, m_init = _JOE_KUO[dim - 1]
        s = p.bit_length() - 1
        m = list(m_init)
        for kk in range(s, _BITS):
            new = m[kk - s] ^ (m[kk - s] << s)
            for i in range(1, s):
                if (p >> (s - i)) & 1:
                    new ^= m[kk - i] << i
            m.append(new)
        v[dim] = [m[j - 1] << (_BITS - j) for j in range(1, _BITS + 1)]
    return v


def _reverse_bits32(x: np.ndarray) -> np.ndarray:
    x = ((x & np.uint64(0x55555555)) << np.uint64(1)) | ((x >> np.uint64(1)) & np.uint64(0x55555555))
    x = ((x & np.uint64(0x33333333)) << np.uint64(2)) | ((x >> np.uint64(2)) & np.uint64(0x33333333))
    x = ((x & np.uint64(0x0F0F0F0F)) << np.uint64(4)) | ((x >> np.uint64(4)) & np.uint64(0x0F0F0F0F))
    x = ((x & np.uint64(0x00FF00FF)) << np.uint64(8)) | ((x >> np.uint64(8)) & np.uint64(0x00FF00FF))
    x = ((x << np.uint64(16)) | (x >> np.uint64(16))) & np.uint64(0xFFFFFFFF)
    return x


def _owen_scramble(x: np.ndarray, seed32: int) -> np.ndarray:
    """Hash-based nested-uniform scramble of 32-bit samples (Laine-Karras hash)."""
    mask = np.uint64(0xFFFFFFFF)
    s = np.uint64(seed32)
    x = _reverse_bits32(x)
    x = (x + s) & mask
    x ^= (x * np.uint64(0x6C50B47C)) & mask
    x ^= (x * np.uint64(0xB82F1E52)) & mask
    x ^= (x * np.uint64(0xC7AFE638)) & mask
    x ^= (x * np.uint64(0x8D22F6E6)) & mask
    return _reverse_bits32(x & mask)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def sobol_points(dimension: int, count: int, scramble_seed: int | None = None) -> np.ndarray:
    """First ``count`` points of the Sobol sequence in [0, 1)^dimension.

    Deterministic for fixed arguments. With ``scramble_seed`` set, each
    dimension is Owen-scrambled by a hash keyed on the seed.
    """
    if not (1 <= dimension <= MAX_DIMENSION):
        raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}], got {dimension}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    v = _direction_matrix(dimension)
    index = np.arange(1, count + 1, dtype=np.uint64)
    gray = index ^ (index >> np.uint64(1))
    x = np.zeros((count, dimension), dtype=np.uint64)
    for j in range(int(gray.max()).bit_length()):
        bit_set = (gray >> np.uint64(j)) & np.uint64(1)
        x ^= bit_set[:, None] * v[None, :, j]
    if scramble_seed is not None:
        for dim in range(dimension):
            x[:, dim] = _owen_scramble(x[:, dim], _splitmix64(int(scramble_seed) * MAX_DIMENSION + dim) & 0xFFFFFFFF)
    return x.astype(float) / float(1 << _BITS)


def init_grid(space: ParameterSpace, count: int, scramble_seed: int | None = None) -> np.ndarray:
    """A (count, d) Sobol grid mapped into the parameter box."""
    return space.denormalize(sobol_points(space.dim, count, scramble_seed))


@dataclass(frozen=True)
class MixtureComponent:
    """One mixture component: independent per-dimension normals (sd 0 pins a value)."""

    fraction: float
    mean: tuple[float, ...]
    sd: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(x) for x in self.mean))
        object.__setattr__(self, "sd", tuple(float(x) for x in self.sd))
        if not (0.0 < self.fraction <= 1.0):
            raise ValueError("component fraction must be in (0, 1]")
        if len(self.mean) != len(self.sd):
            raise ValueError("mean and sd must have equal length")
        if any(s < 0.0 for s in self.sd):
            raise ValueError("component sd must be >= 0")


TruthSpec = Union[DiscreteDistribution, tuple]


@dataclass(frozen=True)
class SimulationSpec:
    """Everything needed to draw a synthetic cohort."""

    model: ModelSpec
    truth: TruthSpec
    regimen: tuple[DoseEvent, ...]
    sample_times: tuple[float, ...]
    error: ErrorModel
    n_subjects: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "regimen", tuple(self.regimen))
        object.__setattr__(self, "sample_times", tuple(float(t) for t in self.sample_times))
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if not self.sample_times:
            raise ValueError("sample_times must be non-empty")
        if isinstance(self.truth, DiscreteDistribution):
            return
        components = tuple(self.truth)
        object.__setattr__(self, "truth", components)
        if not components or not all(isinstance(c, MixtureComponent) for c in components):
            raise ValueError("truth must be a DiscreteDistribution or MixtureComponent sequence")
        total = sum(c.fraction for c in components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component fractions must sum to 1, got {total}")


def _draw_theta(spec: SimulationSpec, rng: np.random.Generator) -> np.ndarray:
    u = rng.random()
    if isinstance(spec.truth, DiscreteDistribution):
        fractions = spec.truth.weights
        pick = int(np.searchsorted(np.cumsum(fractions), u, side="right"))
        pick = min(pick, spec.truth.n_points - 1)
        return spec.truth.points[pick].as_array()
    fractions = np.array([c.fraction for c in spec.truth])
    pick = min(int(np.searchsorted(np.cumsum(fractions), u, side="right")), len(spec.truth) - 1)
    component = spec.truth[pick]
    return np.array(component.mean) + np.array(component.sd) * rng.standard_normal(len(component.mean))


def simulate_population(spec: SimulationSpec) -> tuple[Population, np.ndarray]:
    """Draw a cohort and return it with the true per-subject parameters.

    Per subject: draw theta from the truth, compute the noise-free trajectory,
    then add Gaussian noise with standard deviation omega evaluated at the
    noise-free prediction (there is no observed value yet at that stage;
    fitting later evaluates sigma at the observed value). Negative simulated
    concentrations are kept as-is.
    """
    width = len(str(spec.n_subjects))
    times = np.array(spec.sample_times)
    subjects = []
    thetas = []
    for i in range(spec.n_subjects):
        rng = np.random.Generator(np.random.Philox(key=np.array([spec.seed, i], dtype=np.uint64)))
        theta = _draw_theta(spec, rng)
        clean = predict(spec.model, theta, spec.regimen, times).predictions
        noise_sd = omega(sigma_poly(spec.error, clean), spec.error, allow_zero=True)
        values = clean + rng.standard_normal(times.size) * noise_sd
        observations = tuple(ObservationEvent(float(t), float(v)) for t, v in zip(times, values))
        subjects.append(Subject(id=f"s{i + 1:0{width}d}", doses=spec.regimen,
                                observations=observations))
        thetas.append(theta)
    return Population(tuple(subjects)), np.array(thetas)
