"""Projected quasi-Newton search for the cost coefficients.

The coefficients are tuned so that the Monte-Carlo estimates of every
detection and estimation error meet their nominal levels within the given
tolerances.  The gradient of the underlying saddle objective with respect
to each coefficient is simply prior(m) times the gap between the achieved
and nominal error, so one simulation per iteration yields the full
gradient.  A BFGS inverse-Hessian approximation with unit step size and a
projection onto [epsilon, inf) drives the update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .montecarlo import (STREAM_DESIGN, SimulationConfig, derive_seed, evaluate)
from .policy import AoPolicy, CostCoefficients


def default_initial_coefficients(alpha_bar, beta_bar):
    """Starting point 2/level: puts each constraint's cost term at roughly
    the right order of magnitude so early stopping times are plausible."""
    return CostCoefficients(2.0 / np.asarray(alpha_bar, dtype=float),
                            2.0 / np.asarray(beta_bar, dtype=float))


@dataclass(frozen=True)
class DesignConfig:
    """Nominal levels, tolerances, and loop controls."""

    alpha_bar: np.ndarray
    beta_bar: np.ndarray
    tol_det: float = 0.005
    tol_est: float = 0.005
    epsilon: float = 1e-12
    runs_per_iter: int = 10**6
    max_iters: int = 200
    master_seed: int = 0
    step_scale: float = 1.0
    n_max: int = 10_000
    workers: int = 1
    initial: CostCoefficients | None = None

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha_bar, dtype=float))
        b = np.atleast_1d(np.asarray(self.beta_bar, dtype=float))
        object.__setattr__(self, "alpha_bar", a)
        object.__setattr__(self, "beta_bar", b)
        if np.any((a <= 0) | (a >= 1)):
            raise ValueError("alpha_bar must lie in (0,1)")
        if np.any(b <= 0):
            raise ValueError("beta_bar must be positive")
        if self.tol_det <= 0 or self.tol_est <= 0:
            raise ValueError("tolerances must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.runs_per_iter < 1 or self.max_iters < 1:
            raise ValueError("runs_per_iter and max_iters must be >= 1")


@dataclass(frozen=True)
class DesignState:
    """One quasi-Newton iterate.

    ``gradient`` is the descent-direction gradient (the negated stacked
    error-gap vector); H approximates the inverse Hessian.
    """

    k: int
    coefficients: np.ndarray
    gradient: np.ndarray | None = None
    H: np.ndarray | None = None
    prev_coefficients: np.ndarray | None = None
    prev_gradient: np.ndarray | None = None


# Relative curvature floor below which the BFGS update is skipped to keep H
# positive-definite under Monte-Carlo gradient noise.
CURVATURE_FLOOR = 1e-12


def gradient_from_estimate(perf, config, priors):
    """Stacked gradient of the coefficient objective: entries
    prior(m) * (alpha_hat_m - alpha_bar_m) and prior(m) * (beta_hat_m - beta_bar_m)."""
    g_det = priors * (perf.alpha_hat - config.alpha_bar)
    g_est = priors * (perf.beta_hat - config.beta_bar)
    return np.concatenate([g_det, g_est])


def estimate_gradient(model, coeffs, config, seed):
    """Monte-Carlo gradient estimate at the given coefficients.

    Runs one evaluation; the descent direction used by the update is the
    negation of this vector.
    """
    sim = SimulationConfig(runs=config.runs_per_iter, master_seed=seed,
                           n_max=config.n_max, workers=config.workers)
    perf = evaluate(model, AoPolicy(coeffs), sim)
    return gradient_from_estimate(perf, config, model.priors)


def qn_step(state, new_gradient, epsilon=1e-12, step_scale=1.0):
    """One projected quasi-Newton update.

    ``new_gradient`` is the already-negated gradient (descent direction
    -H @ new_gradient).  Iteration 0 scales the identity by the inverse
    gradient norm; iteration 1 rescales by the secant quotient before the
    first BFGS update; afterwards the standard BFGS inverse update runs,
    skipped whenever the curvature y's is not safely positive.
    """
    grad = np.asarray(new_gradient, dtype=float)
    if state.k == 0:
        H = np.eye(len(grad)) / np.linalg.norm(grad)
    else:
        s = state.coefficients - state.prev_coefficients
        y = grad - state.prev_gradient
        ys = float(y @ s)
        H = state.H
        if ys > CURVATURE_FLOOR * np.linalg.norm(y) * np.linalg.norm(s):
            if state.k == 1:
                H = (ys / float(y @ y)) * np.eye(len(grad))
            rho = 1.0 / ys
            left = np.eye(len(grad)) - rho * np.outer(s, y)
            H = left @ H @ left.T + rho * np.outer(s, s)

    new_coeffs = np.maximum(state.coefficients - step_scale * (H @ grad), epsilon)
    return DesignState(
        k=state.k + 1,
        coefficients=new_coeffs,
        gradient=grad,
        H=H,
        prev_coefficients=state.coefficients,
        prev_gradient=grad,
    )


@dataclass
class DesignReport:
    """Outcome of a design run."""

    converged: bool
    iterations: int
    final_perf: object
    max_violation: float
    history: list = field(default_factory=list)  # (iter, max normalized violation)


def _max_violation(perf, config):
    """Largest constraint gap normalized by its tolerance (<= 1 means met)."""
    v_det = np.abs(perf.alpha_hat - config.alpha_bar) / config.tol_det
    v_est = np.abs(perf.beta_hat - config.beta_bar) / config.tol_est
    return float(max(v_det.max(), v_est.max()))


def design(model, config):
    """Tune coefficients until all error constraints hold within tolerance.

    Each iteration simulates with a fresh seed derived from the master seed
    and the iteration counter, tests convergence on that evaluation, and
    otherwise takes one projected quasi-Newton step.  If max_iters runs out,
    the iterate with the smallest maximum normalized violation is returned
    with ``converged=False``.
    """
    coeffs = config.initial or default_initial_coefficients(config.alpha_bar,
                                                            config.beta_bar)
    if coeffs.M != model.M:
        raise ValueError("coefficient count does not match the hypothesis count")

    state = DesignState(k=0, coefficients=coeffs.stacked())
    best = (np.inf, coeffs, None)
    history = []
    for k in range(config.max_iters):
        seed_k = derive_seed(config.master_seed, k, STREAM_DESIGN)
        sim = SimulationConfig(runs=config.runs_per_iter, master_seed=seed_k,
                               n_max=config.n_max, workers=config.workers)
        current = CostCoefficients.from_stacked(state.coefficients)
        perf = evaluate(model, AoPolicy(current), sim)
        viol = _max_violation(perf, config)
        history.append((k, viol))
        if viol < best[0]:
            best = (viol, current, perf)
        if viol <= 1.0:
            return current, DesignReport(converged=True, iterations=k + 1,
                                         final_perf=perf, max_violation=viol,
                                         history=history)
        raw = gradient_from_estimate(perf, config, model.priors)
        state = qn_step(state, -raw, epsilon=config.epsilon,
                        step_scale=config.step_scale)

    viol, coeffs_best, perf_best = best
    return coeffs_best, DesignReport(converged=False, iterations=config.max_iters,
                                     final_perf=perf_best, max_violation=viol,
                                     history=history)
