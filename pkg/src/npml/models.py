"""Structural pharmacokinetic models.

Two models are supported: a one-compartment model with intravenous input
(parameters Ke, Vd) and a two-compartment oral model with an absorption lag
(parameters Ka, Ke, Vd, t_lag). Both are linear, so predictions are the
superposition of single-dose solutions and the default path is closed form.
:func:`integrate_ode` solves the same systems with an adaptive Dormand-Prince
integrator; it exists to cross-validate the closed forms and as the extension
point for models without analytic solutions.

A :class:`ModelSpec` may pin a subset of parameters to fixed values; the
remaining free parameters, in canonical order, are what a
:class:`~npml.data.ParameterSpace` spans.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .data import DoseEvent, ROUTE_INFUSION, ROUTE_ORAL
from .exceptions import IntegrationFailureError, ModelDomainError

ONE_COMP_IV = "one_comp_iv"
TWO_COMP_ORAL_LAG = "two_comp_oral_lag"

MODEL_PARAMETERS: dict[str, tuple[str, ...]] = {
    ONE_COMP_IV: ("Ke", "Vd"),
    TWO_COMP_ORAL_LAG: ("Ka", "Ke", "Vd", "t_lag"),
}

# Relative Ka-Ke gap below which the oral model switches to its limit form.
KA_KE_DEGENERACY = 1e-8


@dataclass(frozen=True)
class ModelSpec:
    """Which structural model to use, with optional pinned parameters."""

    kind: str
    fixed: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in MODEL_PARAMETERS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        fixed = tuple((str(n), float(v)) for n, v in
                      (self.fixed.items() if isinstance(self.fixed, dict) else self.fixed))
        object.__setattr__(self, "fixed", fixed)
        names = MODEL_PARAMETERS[self.kind]
        for n, _ in fixed:
            if n not in names:
                raise ValueError(f"cannot fix unknown parameter {n!r} of {self.kind}")
        if len({n for n, _ in fixed}) != len(fixed):
            raise ValueError("duplicate fixed parameter")
        if len(fixed) >= len(names):
            raise ValueError("at least one parameter must remain free")

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return MODEL_PARAMETERS[self.kind]

    @property
    def free_names(self) -> tuple[str, ...]:
        pinned = {n for n, _ in self.fixed}
        return tuple(n for n in self.parameter_names if n not in pinned)

    @property
    def n_free(self) -> int:
        return len(self.free_names)

    def full_parameters(self, free: np.ndarray) -> dict[str, np.ndarray]:
        """Expand (K, n_free) free coordinates into per-name (K,) arrays."""
        free = np.atleast_2d(np.asarray(free, dtype=float))
        if free.shape[1] != self.n_free:
            raise ValueError(
                f"expected {self.n_free} free parameters ({self.free_names}), got {free.shape[1]}")
        out = {n: np.broadcast_to(v, free.shape[0]) for n, v in self.fixed}
        for j, n in enumerate(self.free_names):
            out[n] = free[:, j]
        return out


@dataclass(frozen=True)
class Trajectory:
    """Noise-free predicted concentrations at sorted time points."""

    times: np.ndarray
    predictions: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        p = np.array(self.predictions, dtype=float)
        if t.shape != p.shape or t.ndim != 1:
            raise ValueError("times and predictions must be 1-D and equally long")
        if (np.diff(t) < 0.0).any():
            raise ValueError("times must be sorted")
        if not np.isfinite(p).all():
            raise ValueError("predictions must be finite")
        if (p < 0.0).any():
            raise ValueError("predictions must be non-negative")
        for name, arr in (("times", t), ("predictions", p)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _merged_doses(doses: Sequence[DoseEvent], route: str, model_name: str) -> list[DoseEvent]:
    for d in doses:
        if d.route != route:
            raise ModelDomainError(f"{model_name} accepts only {route!r} doses, got {d.route!r}")
        if route == ROUTE_ORAL and d.duration != 0.0:
            raise ModelDomainError("oral doses must be instantaneous (duration 0)")
    # same (time, duration) doses merge by amount: the systems are linear
    merged: dict[tuple[float, float], float] = {}
    for d in doses:
        key = (d.time, d.duration)
        merged[key] = merged.get(key, 0.0) + d.amount
    return [DoseEvent(t, a, dur, route) for (t, dur), a in sorted(merged.items())]


def _require_positive(name: str, values: np.ndarray) -> None:
    if (np.asarray(values) <= 0.0).any():
        raise ModelDomainError(f"{name} must be positive")


def _one_comp_iv_batch(ke: np.ndarray, vd: np.ndarray,
                       doses: Sequence[DoseEvent], times: np.ndarray) -> np.ndarray:
    _require_positive("Ke", ke)
    _require_positive("Vd", vd)
    t = times[None, :]
    k = ke[:, None]
    amount = np.zeros((ke.size, times.size))
    for d in _merged_doses(doses, ROUTE_INFUSION, ONE_COMP_IV):
        since_start = np.maximum(t - d.time, 0.0)
        if d.duration == 0.0:
            amount += np.where(t >= d.time, d.amount * np.exp(-k * since_start), 0.0)
        else:
            rate = d.amount / d.duration
            since_end = np.maximum(t - (d.time + d.duration), 0.0)
            ramp = (rate / k) * (1.0 - np.exp(-k * np.minimum(since_start, d.duration)))
            amount += ramp * np.exp(-k * since_end)
    return amount / vd[:, None]


def _two_comp_oral_lag_batch(ka: np.ndarray, ke: np.ndarray, vd: np.ndarray, tlag: np.ndarray,
                             doses: Sequence[DoseEvent], times: np.ndarray) -> np.ndarray:
    _require_positive("Ka", ka)
    _require_positive("Ke", ke)
    _require_positive("Vd", vd)
    if (np.asarray(tlag) < 0.0).any():
        raise ModelDomainError("t_lag must be >= 0")
    t = times[None, :]
    conc = np.zeros((ka.size, times.size))
    near = np.abs(ka - ke) < KA_KE_DEGENERACY * ke
    denom = np.where(near, 1.0, ka - ke)  # placeholder 1.0 where the limit form is used
    for d in _merged_doses(doses, ROUTE_ORAL, TWO_COMP_ORAL_LAG):
        tau = np.maximum(t - d.time - tlag[:, None], 0.0)
        decay_ke = np.exp(-ke[:, None] * tau)
        exact = (d.amount * ka / (vd * denom))[:, None] * (decay_ke - np.exp(-ka[:, None] * tau))
        limit = (d.amount * ke / vd)[:, None] * tau * decay_ke
        single = np.where(near[:, None], limit, exact)
        conc += np.where(t >= d.time + tlag[:, None], single, 0.0)
    return conc


def predict_batch(model: ModelSpec, thetas, doses: Sequence[DoseEvent], times) -> np.ndarray:
    """Closed-form predictions for a (K, n_free) batch of parameter vectors.

    Returns a (K, T) array of concentrations at the requested times.
    """
    times = np.asarray(times, dtype=float)
    p = model.full_parameters(thetas)
    if model.kind == ONE_COMP_IV:
        return _one_comp_iv_batch(p["Ke"], p["Vd"], doses, times)
    return _two_comp_oral_lag_batch(p["Ka"], p["Ke"], p["Vd"], p["t_lag"], doses, times)


def predict(model: ModelSpec, theta, doses: Sequence[DoseEvent], times) -> Trajectory:
    """Closed-form trajectory for a single parameter vector."""
    times = np.asarray(times, dtype=float)
    values = predict_batch(model, np.atleast_2d(np.asarray(theta, dtype=float)), doses, times)[0]
    return Trajectory(times, values)


def predict_one_comp_iv(theta, doses: Sequence[DoseEvent], times) -> Trajectory:
    """One-compartment IV model: theta = (Ke, Vd)."""
    return predict(ModelSpec(ONE_COMP_IV), theta, doses, times)


def predict_two_comp_oral_lag(theta, doses: Sequence[DoseEvent], times) -> Trajectory:
    """Two-compartment oral model with lag: theta = (Ka, Ke, Vd, t_lag)."""
    return predict(ModelSpec(TWO_COMP_ORAL_LAG), theta, doses, times)


def integrate_ode(model: ModelSpec, theta, doses: Sequence[DoseEvent], times,
                  rtol: float = 1e-8, atol: float = 1e-12) -> Trajectory:
    """Dormand-Prince 4(5) solution of the model ODEs.

    Integration restarts at every dose event so event times are exact step
    boundaries: a bolus adds its amount to the input compartment, an infusion
    toggles a constant rate term. Times that coincide with an event are
    evaluated after the event is applied.
    """
    if not (rtol > 0.0 and atol > 0.0):
        raise ValueError("rtol and atol must be positive")
    requested = np.asarray(times, dtype=float)
    if requested.size == 0:
        return Trajectory(requested, np.zeros(0))
    times, inverse = np.unique(requested, return_inverse=True)

    theta = np.asarray(theta, dtype=float)
    p = {n: float(v[0]) for n, v in model.full_parameters(theta[None, :]).items()}

    # Event list: (time, compartment jump amount) and rate toggles for infusions.
    jumps: list[tuple[float, float]] = []
    rate_changes: list[tuple[float, float]] = []
    if model.kind == ONE_COMP_IV:
        _require_positive("Ke", p["Ke"])
        _require_positive("Vd", p["Vd"])
        for d in _merged_doses(doses, ROUTE_INFUSION, ONE_COMP_IV):
            if d.duration == 0.0:
                jumps.append((d.time, d.amount))
            else:
                rate = d.amount / d.duration
                rate_changes.append((d.time, rate))
                rate_changes.append((d.time + d.duration, -rate))
        n_state, obs_state = 1, 0
        ke = p["Ke"]

        def make_rhs(rate):
            return lambda t, y: (-ke * y[0] + rate,)
    else:
        _require_positive("Ka", p["Ka"])
        _require_positive("Ke", p["Ke"])
        _require_positive("Vd", p["Vd"])
        if p["t_lag"] < 0.0:
            raise ModelDomainError("t_lag must be >= 0")
        for d in _merged_doses(doses, ROUTE_ORAL, TWO_COMP_ORAL_LAG):
            jumps.append((d.time + p["t_lag"], d.amount))
        n_state, obs_state = 2, 1
        ka, ke = p["Ka"], p["Ke"]

        def make_rhs(rate):
            return lambda t, y: (-ka * y[0], ka * y[0] - ke * y[1])

    t_end = float(times[-1])
    boundaries = sorted({0.0, *(t for t, _ in jumps), *(t for t, _ in rate_changes)})
    boundaries = [b for b in boundaries if b <= t_end]

    y = np.zeros(n_state)
    rate = 0.0
    out = np.empty_like(times)
    t_cur = 0.0
    for i, b in enumerate(boundaries):
        if b > t_cur:
            inner = times[(times > t_cur) & (times < b)]
            t_eval = np.append(inner, b)
            sol = solve_ivp(make_rhs(rate), (t_cur, b), y, method="RK45",
                            rtol=rtol, atol=atol, t_eval=t_eval)
            if not sol.success:
                raise IntegrationFailureError(f"integration failed: {sol.message}", theta=tuple(theta))
            out[(times > t_cur) & (times < b)] = sol.y[obs_state, :-1]
            y = sol.y[:, -1].copy()
            t_cur = b
        for t, a in jumps:
            if t == b:
                y[0] += a
        for t, dr in rate_changes:
            if t == b:
                rate += dr
        out[times == b] = y[obs_state]
    if t_end > t_cur:
        inner = times[times > t_cur]
        sol = solve_ivp(make_rhs(rate), (t_cur, t_end), y, method="RK45",
                        rtol=rtol, atol=atol, t_eval=inner)
        if not sol.success:
            raise IntegrationFailureError(f"integration failed: {sol.message}", theta=tuple(theta))
        out[times > t_cur] = sol.y[obs_state]

    conc = out / p["Vd"]
    # The integrator can leave concentrations a hair below zero; clamp noise-level
    # negatives, reject anything larger.
    floor = -max(1e-9, 10.0 * atol)
    if (conc < floor).any():
        raise IntegrationFailureError("integrator produced negative concentrations", theta=tuple(theta))
    return Trajectory(requested, np.maximum(conc, 0.0)[inverse])
