"""Instantaneous cost, stopping rule, decision rule, and estimator.

The cost of deciding for hypothesis m is the posterior mass on the other
hypotheses weighted by their detection coefficients plus the posterior
mean-squared estimation error under m weighted by its estimation
coefficient.  The policy stops as soon as the minimum decision cost drops
to the time-varying threshold n + 1, then decides for the argmin and
estimates by the posterior mean of the decided hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .model import hypothesis_posteriors


@dataclass(frozen=True)
class CostCoefficients:
    """The 2M positive cost coefficients and their normalized forms."""

    lambda_det: np.ndarray
    lambda_est: np.ndarray

    def __post_init__(self):
        ld = np.atleast_1d(np.asarray(self.lambda_det, dtype=float))
        le = np.atleast_1d(np.asarray(self.lambda_est, dtype=float))
        object.__setattr__(self, "lambda_det", ld)
        object.__setattr__(self, "lambda_est", le)
        if ld.shape != le.shape or ld.ndim != 1:
            raise ValueError("lambda_det and lambda_est must be 1-D with equal length")
        if not (np.all(np.isfinite(ld)) and np.all(np.isfinite(le))):
            raise ValueError("cost coefficients must be finite")
        if np.any(ld <= 0) or np.any(le <= 0):
            raise ValueError("cost coefficients must be strictly positive")

    @property
    def M(self):
        return len(self.lambda_det)

    @property
    def total(self):
        return float(self.lambda_det.sum() + self.lambda_est.sum())

    @property
    def c_bar(self):
        return 1.0 / self.total

    @property
    def lambda_det_bar(self):
        return self.lambda_det / self.total

    @property
    def lambda_est_bar(self):
        return self.lambda_est / self.total

    def stacked(self):
        """Coefficients as one vector (detection block first)."""
        return np.concatenate([self.lambda_det, self.lambda_est])

    @staticmethod
    def from_stacked(vec):
        vec = np.asarray(vec, dtype=float)
        M = len(vec) // 2
        return CostCoefficients(vec[:M], vec[M:])


def decision_cost_matrix(hyp_post, post_var_trace, coeffs):
    """Decision costs for every hypothesis; last axis indexes hypotheses."""
    post = np.asarray(hyp_post, dtype=float)
    var = np.asarray(post_var_trace, dtype=float)
    det_total = post @ coeffs.lambda_det
    return (det_total[..., None]
            - coeffs.lambda_det * post
            + coeffs.lambda_est * post * var)


def decision_cost(m, summary, coeffs):
    """Cost of deciding for hypothesis m at the given summary."""
    if not 1 <= m <= coeffs.M:
        raise ValueError(f"hypothesis index {m} outside 1..{coeffs.M}")
    return float(decision_cost_matrix(summary.hyp_post, summary.post_var_trace,
                                      coeffs)[m - 1])


def cost_g(summary, coeffs):
    """Instantaneous cost: the minimum decision cost over hypotheses."""
    return float(decision_cost_matrix(summary.hyp_post, summary.post_var_trace,
                                      coeffs).min())


def ao_should_stop(g, n):
    """Stop as soon as g / (n + 1) <= 1."""
    if n < 0:
        raise ValueError("sample count must be nonnegative")
    return g <= n + 1.0


def decide(summary, coeffs):
    """Hypothesis with the smallest decision cost; ties break to the
    smallest index.  1-based."""
    d = decision_cost_matrix(summary.hyp_post, summary.post_var_trace, coeffs)
    return int(np.argmin(d)) + 1


def normalized_cost_limit(model, m, theta, coeffs):
    """Almost-sure limit of n * normalized cost under (H_m, theta)."""
    return float(coeffs.lambda_est_bar[m - 1] * model.fisher_info_trace_inv(m, theta))


@dataclass(frozen=True)
class Trajectory:
    """Outcome of one sequential run."""

    true_m: int
    true_theta: np.ndarray
    tau: int
    decision: int
    estimate: np.ndarray
    capped: bool
    g_final: float  # instantaneous cost at the stopping time (NaN for two-step)


class AoPolicy:
    """Engine adapter for the cost-threshold policy."""

    needs_moments = True

    def __init__(self, coeffs):
        self.coeffs = coeffs

    def prior_stop(self, model):
        var = np.array([model.prior_var_trace(m) for m in range(1, model.M + 1)])
        d = decision_cost_matrix(model.priors, var, self.coeffs)
        g = float(d.min())
        if g <= 1.0:
            return int(np.argmin(d)), g
        return None

    def stop_rule(self, n, logm, mean, var, model):
        post = hypothesis_posteriors(logm, model.log_priors)
        d = decision_cost_matrix(post, var, self.coeffs)
        g = d.min(axis=1)
        dec0 = d.argmin(axis=1)
        return g <= n + 1.0, dec0, g

    def cap_rule(self, logm, mean, var, model):
        post = hypothesis_posteriors(logm, model.log_priors)
        d = decision_cost_matrix(post, var, self.coeffs)
        return d.argmin(axis=1), d.min(axis=1)


def run_policy(model, coeffs, seed, n_max=10_000):
    """Run one trajectory of the cost-threshold policy.

    Draws the hypothesis and parameter from the model prior, streams
    observations, and stops at the first n (checked from n = 0 with the
    prior summary) where the stopping rule fires.  Hitting n_max stops with
    ``capped`` set.  Deterministic in ``seed``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    out = _engine.simulate(model, AoPolicy(coeffs), np.asarray([seed], dtype=np.uint64),
                           n_max=n_max)
    return _engine.trajectory_at(out, 0)
