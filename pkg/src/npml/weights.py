"""Simplex-constrained weight optimization by a primal-dual interior point method.

Given the scaled likelihood matrix Psi, find weights lambda on the probability
simplex maximizing sum_i log((Psi @ lambda)_i). The simplex constraint is
handled through the homogeneous form

    minimize  -sum_i log((Psi lambda)_i) + N * sum_k lambda_k,   lambda >= 0,

whose stationary points satisfy sum(lambda) = 1 exactly, leaving only bound
constraints. Newton steps use a Mehrotra predictor-corrector with a 0.99
fraction-to-boundary rule.

Two linear-algebra regimes: for modest grids the Newton system
(Q^T Q + diag(d)) dx = r is solved through a QR factorization of the stacked
matrix [Q; diag(sqrt(d))], which stays backward-stable when support points
duplicate each other's likelihood columns; for the large initial grids it is
solved through the Sherman-Morrison-Woodbury identity so only an N x N core
is factorized. The Woodbury form can destabilize in its endgame when
near-duplicate columns carry weight, so a stalled run is finished by an exact
solve restricted to the active columns, followed by verification of the
full-grid certificate (augmenting the active set until no column violates).

The certificate is the first-order condition of the original problem: with
g_k = sum_i Psi_ik / (Psi lambda)_i, optimality means g_k <= N for every k,
with equality on the support. ``kkt_residual`` is the largest violation of
that condition at the returned weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import PsiMatrix
from .exceptions import ConvergenceFailureError, DegeneratePsiError

FRACTION_TO_BOUNDARY = 0.99
DEFAULT_TOL = 1e-8
MAX_ITERATIONS = 200

# Iterations without meaningful certificate progress before the interior
# point loop is declared stalled and handed to the active-set finisher.
_STALL_WINDOW = 15

# lambda cutoff (relative to the largest weight) for active-set membership.
_ACTIVE_CUT = 1e-10


@dataclass(frozen=True)
class WeightSolution:
    """Optimal simplex weights with the optimality certificate that backs them."""

    weights: np.ndarray
    log_likelihood: float
    kkt_residual: float
    iterations: int

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _step_length(x: np.ndarray, dx: np.ndarray) -> float:
    """Longest step in [0, 1] keeping x + a*dx strictly positive (0.99 rule)."""
    shrinking = dx < 0.0
    if not shrinking.any():
        return 1.0
    return min(1.0, FRACTION_TO_BOUNDARY * float(np.min(-x[shrinking] / dx[shrinking])))


def _certificate(P: np.ndarray, lam: np.ndarray, tol: float) -> float:
    """Largest violation of the optimality condition at normalized weights."""
    n = P.shape[0]
    lam_hat = lam / lam.sum()
    g = P.T @ (1.0 / (P @ lam_hat))
    high = float(g.max() - n)
    support = lam_hat > tol
    low = float((n - g[support]).max()) if support.any() else 0.0
    return max(high, low, 0.0)


def _spd_core_solver(matrix: np.ndarray, floor: float):
    """Solver for the N x N Woodbury core, which satisfies ``matrix >= floor*I``.

    Cholesky when it succeeds; otherwise a symmetric eigendecomposition with
    the spectrum clipped at the known lower bound, which tolerates the
    extreme conditioning of late interior-point iterations.
    """
    try:
        factor = cho_factor(matrix)
        return lambda rhs: cho_solve(factor, rhs)
    except (LinAlgError, np.linalg.LinAlgError):
        eigenvalues, vectors = np.linalg.eigh(matrix)
        clipped = np.maximum(eigenvalues, floor)
        return lambda rhs: vectors @ ((vectors.T @ rhs) / clipped)


def _stacked_qr_solver(Q: np.ndarray, d: np.ndarray):
    """Solve (Q^T Q + diag(d)) x = r via QR of the stacked matrix [Q; sqrt(d)].

    Equivalent to the normal equations but backward-stable when columns of Q
    are (nearly) duplicated, which happens whenever two support points sit in
    a flat region of every subject's likelihood.
    """
    k = d.size
    stacked = np.vstack([Q, np.diag(np.sqrt(d))])
    r_factor = scipy.linalg.qr(stacked, mode="r")[0][:k]

    def solve(rhs):
        half = scipy.linalg.solve_triangular(r_factor, rhs, trans="T")
        return scipy.linalg.solve_triangular(r_factor, half)

    return solve


def _interior_point(P: np.ndarray, tol: float, max_iter: int):
    """Mehrotra predictor-corrector loop.

    Returns (best_lambda, iterations, best_violation); stops early when the
    certificate is met or when no progress has been made for a window of
    iterations (large-grid endgames can oscillate, see module docstring).
    """
    n, k = P.shape
    lam = np.full(k, 1.0 / k)
    g = P.T @ (1.0 / (P @ lam))
    z = np.maximum(n - g, 1.0)

    best_lam, best_viol, best_at = lam.copy(), np.inf, 0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        w = P @ lam
        y = 1.0 / w
        g = P.T @ y
        viol = _certificate(P, lam, tol)
        if viol < best_viol:
            best_lam, best_viol, best_at = lam.copy(), viol, iterations
        if best_viol <= tol:
            break
        if iterations - best_at >= _STALL_WINDOW:
            break

        mu = max(float(lam @ z) / k, 1e-300)
        d = z / lam
        Q = y[:, None] * P
        try:
            if k <= 4 * n:
                solve = _stacked_qr_solver(Q, d)
            else:
                d_inv = 1.0 / d
                core_solve = _spd_core_solver(np.eye(n) + (Q * d_inv) @ Q.T, floor=1.0)

                def solve(rhs):
                    u = d_inv * rhs
                    return u - d_inv * (Q.T @ core_solve(Q @ u))
        except (LinAlgError, np.linalg.LinAlgError) as e:
            raise DegeneratePsiError(f"Newton system factorization failed: {e}") from e

        # Mehrotra predictor: pure Newton step toward the boundary.
        dl_aff = solve(g - n)
        dz_aff = -z - d * dl_aff
        a_p = min(_step_length(lam, dl_aff), _step_length(w, P @ dl_aff))
        a_d = _step_length(z, dz_aff)
        mu_aff = float((lam + a_p * dl_aff) @ (z + a_d * dz_aff)) / k
        sigma = min(max(mu_aff / mu, 0.0) ** 3, 1.0)

        # Corrector re-centers toward sigma * mu and compensates the
        # second-order complementarity term of the predictor.
        dl = solve((g - n) + (sigma * mu - dl_aff * dz_aff) / lam)
        dz = (sigma * mu - lam * z - dl_aff * dz_aff) / lam - d * dl

        # The 0.99 rule keeps lambda, z and the mixture densities w = P lambda
        # (the log arguments) strictly positive in exact arithmetic; the floor
        # guards against rounding pushing a coordinate to 0 or below.
        a_p = min(_step_length(lam, dl), _step_length(w, P @ dl))
        lam = np.maximum(lam + a_p * dl, 1e-300)
        z = np.maximum(z + _step_length(z, dz) * dz, 1e-300)

    return best_lam, iterations, best_viol


def _active_set_finish(P: np.ndarray, seed: np.ndarray, tol: float, max_iter: int):
    """Finish a stalled large-grid solve on the active columns.

    Solves the problem restricted to the columns carrying weight in ``seed``
    (an exact solve through the stable QR path), then checks the full-grid
    certificate and augments the active set with any violating column until
    none remains.
    """
    n, k = P.shape
    active = np.flatnonzero(seed > seed.max() * _ACTIVE_CUT)
    # every subject needs a usable column inside the active set
    starving = np.flatnonzero(P[:, active].max(axis=1) <= 0.0)
    if starving.size:
        active = np.union1d(active, np.argmax(P[starving], axis=1))

    iterations = 0
    for _ in range(20):
        sub_lam, spent, sub_viol = _interior_point(P[:, active], tol, max_iter)
        iterations += spent
        if sub_viol > tol:
            return None, iterations, sub_viol
        lam = np.zeros(k)
        lam[active] = sub_lam / sub_lam.sum()
        g = P.T @ (1.0 / (P[:, active] @ lam[active]))
        violators = np.setdiff1d(np.flatnonzero(g > n + 0.5 * tol), active)
        if violators.size == 0:
            return lam, iterations, _certificate(P, lam, tol)
        active = np.union1d(active, violators)
    return None, iterations, _certificate(P, lam, tol)


def pdip_weights(psi: PsiMatrix, tol: float = DEFAULT_TOL,
                 max_iter: int = MAX_ITERATIONS) -> WeightSolution:
    """Maximize the mixture log likelihood over the weight simplex.

    The reported log likelihood includes the matrix's per-row log scales, so
    it is the true value sum_i log p(Y_i | F) in natural-log units.

    Raises :class:`ConvergenceFailureError` (carrying the best iterate) if the
    certificate is not met within the iteration budget, and
    :class:`DegeneratePsiError` if a Newton system cannot be factorized.
    """
    P = psi.values
    n, k = P.shape
    offset = float(psi.row_log_scale.sum())

    if k == 1:
        ll = float(np.log(P[:, 0]).sum()) + offset
        return WeightSolution(np.ones(1), ll, 0.0, 0)

    lam, iterations, viol = _interior_point(P, tol, max_iter)
    if viol > tol:
        finished, extra, viol = _active_set_finish(P, lam, tol, max_iter)
        iterations += extra
        if finished is None:
            lam_hat = lam / lam.sum()
            best = WeightSolution(lam_hat, float(np.log(P @ lam_hat).sum()) + offset,
                                  viol, iterations)
            raise ConvergenceFailureError(
                f"weight optimizer stalled with certificate residual {viol:.3e} > {tol:.3e}",
                best=best)
        lam = finished

    lam_hat = lam / lam.sum()
    ll = float(np.log(P @ lam_hat).sum()) + offset
    return WeightSolution(lam_hat, ll, _certificate(P, lam_hat, tol), iterations)
