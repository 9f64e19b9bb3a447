"""Scenario contract and the shared Bayesian combination math.

A scenario bundles everything the policies need to know about one inference
problem: how data is generated under each hypothesis, how to maintain a
sufficient statistic, and how to turn that statistic into per-hypothesis
evidence and posterior moments.  Hypotheses are numbered 1..M in the public
API; internal arrays are 0-based.

All marginal likelihoods are handled in the log domain.  Posterior
probabilities over hypotheses are recovered with a max-shifted softmax so
that evidence gaps of hundreds of nats neither overflow nor underflow.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np


class EvidenceError(ValueError):
    """All hypotheses carry zero evidence (every log marginal is -inf)."""


def hypothesis_posteriors(log_marginal, log_prior):
    """Posterior probabilities of the hypotheses from log evidence.

    Entry m is proportional to exp(log_marginal[m] + log_prior[m]).  The
    normalization is done after subtracting the maximum exponent, so shifts
    of several hundred in the exponents are handled exactly.

    Supports batched input: the last axis indexes hypotheses.
    """
    log_marginal = np.asarray(log_marginal, dtype=float)
    log_prior = np.asarray(log_prior, dtype=float)
    z = log_marginal + log_prior
    m = np.max(z, axis=-1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise EvidenceError("degenerate evidence: all log marginals are -inf")
    p = np.exp(z - m)
    return p / p.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class PosteriorSummary:
    """Everything the policies consume at one sample count.

    post_mean holds one vector per hypothesis (length = that hypothesis's
    parameter dimension); post_var_trace is the trace of the posterior
    error covariance per hypothesis.
    """

    n: int
    log_marginal: np.ndarray
    hyp_post: np.ndarray
    post_mean: tuple
    post_var_trace: np.ndarray


class ScenarioModel(abc.ABC):
    """Generative + inference contract a concrete scenario implements.

    Immutable after construction and safe to share across threads.  The
    scalar methods below are the reference surface; ``batch_*`` methods are
    the vectorized equivalents used by the trajectory engine.  Both are
    backed by the same numerical code so a single run reproduces bit-exactly
    inside any batch.
    """

    priors: np.ndarray  # shape (M,)

    @property
    def M(self):
        return len(self.priors)

    @property
    def log_priors(self):
        return np.log(self.priors)

    def _validate_priors(self):
        p = np.asarray(self.priors, dtype=float)
        if p.ndim != 1 or len(p) < 2:
            raise ValueError("need at least two hypotheses")
        if np.any(p <= 0):
            raise ValueError("hypothesis priors must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("hypothesis priors must sum to 1")

    def check_hypothesis(self, m):
        if not 1 <= m <= self.M:
            raise ValueError(f"hypothesis index {m} outside 1..{self.M}")

    # -- generative side -------------------------------------------------
    @abc.abstractmethod
    def param_dim(self, m):
        """Dimension of the parameter under hypothesis m."""

    @abc.abstractmethod
    def sample_param(self, m, rng):
        """Draw a parameter from the prior of hypothesis m."""

    @abc.abstractmethod
    def sample_observation(self, m, theta, rng):
        """Draw one observation under hypothesis m with parameter theta."""

    @abc.abstractmethod
    def sample_observation_block(self, m, theta, rng, count):
        """Draw ``count`` observations at once (same stream as repeated
        single draws is NOT guaranteed; the engine always uses blocks)."""

    # -- sufficient statistic --------------------------------------------
    @abc.abstractmethod
    def new_statistic(self):
        """Statistic of the empty sample (n = 0)."""

    @abc.abstractmethod
    def update_statistic(self, stat, x):
        """Statistic after appending observation x.  Pure."""

    # -- inference side ---------------------------------------------------
    @abc.abstractmethod
    def log_marginal(self, m, stat):
        """log p(data | H_m) as a function of the sufficient statistic,
        including all n-dependent constants shared across hypotheses."""

    @abc.abstractmethod
    def posterior_mean(self, m, stat):
        """Posterior mean of the parameter under H_m, shape (K_m,)."""

    @abc.abstractmethod
    def posterior_var_trace(self, m, stat):
        """Trace of the posterior error covariance under H_m (>= 0)."""

    @abc.abstractmethod
    def prior_mean(self, m):
        pass

    @abc.abstractmethod
    def prior_var_trace(self, m):
        pass

    @abc.abstractmethod
    def fisher_info_trace_inv(self, m, theta):
        """Trace of the inverse Fisher information at theta under H_m."""

    @abc.abstractmethod
    def kl_divergence(self, m, theta_m, k, theta_k):
        """KL between the sampling distributions (H_m, theta_m) || (H_k, theta_k)."""

    # -- batched engine surface (scalar parameters only) ------------------
    @abc.abstractmethod
    def batch_new(self, n_runs):
        """Vectorized statistic container for ``n_runs`` trajectories."""

    @abc.abstractmethod
    def batch_push(self, batch, rows, x):
        """Append one observation per row (in place)."""

    @abc.abstractmethod
    def batch_log_marginals(self, batch, rows):
        """(len(rows), M) array of log marginals."""

    @abc.abstractmethod
    def batch_posterior(self, batch, rows):
        """(log_marginal, post_mean, post_var_trace), each (len(rows), M)."""

    def summary_parts(self, stat):
        """(log_marginal, post_mean, post_var_trace) arrays for one statistic."""
        M = self.M
        logm = np.array([self.log_marginal(m, stat) for m in range(1, M + 1)])
        mean = tuple(self.posterior_mean(m, stat) for m in range(1, M + 1))
        var = np.array([self.posterior_var_trace(m, stat) for m in range(1, M + 1)])
        return logm, mean, var


def prior_summary(model):
    """PosteriorSummary of the empty sample: hypothesis posteriors equal the
    priors and parameter moments equal the prior moments."""
    M = model.M
    return PosteriorSummary(
        n=0,
        log_marginal=np.zeros(M),
        hyp_post=model.priors.copy(),
        post_mean=tuple(model.prior_mean(m) for m in range(1, M + 1)),
        post_var_trace=np.array([model.prior_var_trace(m) for m in range(1, M + 1)]),
    )


def summarize(model, stat):
    """Full posterior summary for a statistic; pure in (model, stat).

    The empty sample uses the convention log_marginal = 0 for every
    hypothesis, which makes the prior summary a special case.
    """
    if stat.n == 0:
        return prior_summary(model)
    logm, mean, var = model.summary_parts(stat)
    post = hypothesis_posteriors(logm, model.log_priors)
    return PosteriorSummary(
        n=stat.n,
        log_marginal=logm,
        hyp_post=post,
        post_mean=mean,
        post_var_trace=var,
    )
