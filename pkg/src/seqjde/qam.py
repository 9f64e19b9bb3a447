"""Joint 16-QAM symbol decoding and noise-power estimation.

Each hypothesis transmits one constellation point over a complex AWGN
channel whose noise power sigma2 is itself random with an inverse-Gamma
prior.  The model is fully conjugate: given the residual power sum
S_m = sum |x_i - s_m|^2, the posterior of sigma2 under H_m is
IGam(a + n, b + S_m) and the evidence has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .model import ScenarioModel

_LOG_PI = math.log(math.pi)


def square_constellation(levels=(-3.0, -1.0, 1.0, 3.0), scale=None):
    """Square QAM grid over the level set, normalized to unit average energy
    unless an explicit scale is given."""
    pts = np.array([re + 1j * im for re in levels for im in levels])
    if scale is None:
        scale = 1.0 / math.sqrt(float(np.mean(np.abs(pts) ** 2)))
    return pts * scale


@dataclass(frozen=True)
class QamConfig:
    """Constellation and noise-power prior; a > 2 keeps the prior variance finite."""

    constellation: np.ndarray = field(default_factory=square_constellation)
    igam_shape: float = 2.1
    igam_scale: float = 0.9

    def __post_init__(self):
        pts = np.asarray(self.constellation, dtype=complex)
        object.__setattr__(self, "constellation", pts)
        if pts.ndim != 1 or len(pts) < 2:
            raise ValueError("constellation needs at least two points")
        if len(np.unique(pts)) != len(pts):
            raise ValueError("constellation points must be pairwise distinct")
        if self.igam_shape <= 2:
            raise ValueError("igam_shape must exceed 2 (finite prior variance)")
        if self.igam_scale <= 0:
            raise ValueError("igam_scale must be positive")


@dataclass(frozen=True)
class ResidualStat:
    """Sufficient statistic: count, complex sum, power sum, and the derived
    per-hypothesis residual power sums S."""

    n: int
    sum_x: complex
    sum_abs2: float
    residual: np.ndarray  # shape (M,)


class ResidualBatch:
    """Vectorized residual power sums for a batch of trajectories."""

    __slots__ = ("n", "residual", "sum_x", "sum_abs2")

    def __init__(self, size, M):
        self.n = np.zeros(size, dtype=np.int64)
        self.residual = np.zeros((size, M), dtype=np.float64)
        self.sum_x = np.zeros(size, dtype=np.complex128)
        self.sum_abs2 = np.zeros(size, dtype=np.float64)


class QamModel(ScenarioModel):
    """AWGN symbol decoding with inverse-Gamma noise-power prior."""

    obs_dtype = np.complex128

    def __init__(self, config=None, priors=None):
        self.config = config or QamConfig()
        M = len(self.config.constellation)
        if priors is None:
            priors = np.full(M, 1.0 / M)
        self.priors = np.asarray(priors, dtype=float)
        if len(self.priors) != M:
            raise ValueError("priors must match the constellation size")
        self._validate_priors()
        self._points = self.config.constellation
        self._abs2 = np.abs(self._points) ** 2

    # -- generative -------------------------------------------------------
    def param_dim(self, m):
        self.check_hypothesis(m)
        return 1

    def sample_param(self, m, rng):
        self.check_hypothesis(m)
        c = self.config
        return c.igam_scale / rng.gamma(c.igam_shape, 1.0)

    def sample_observation(self, m, theta, rng):
        return self.sample_observation_block(m, theta, rng, 1)[0]

    def sample_observation_block(self, m, theta, rng, count):
        self.check_hypothesis(m)
        if theta <= 0:
            raise ValueError("noise power must be positive")
        z = rng.standard_normal(2 * count).view(np.complex128)
        return self._points[m - 1] + math.sqrt(theta / 2.0) * z

    # -- sufficient statistic ----------------------------------------------
    def new_statistic(self):
        M = self.M
        return ResidualStat(n=0, sum_x=0j, sum_abs2=0.0, residual=np.zeros(M))

    def update_statistic(self, stat, x):
        res = stat.residual + np.abs(x - self._points) ** 2
        return ResidualStat(
            n=stat.n + 1,
            sum_x=stat.sum_x + x,
            sum_abs2=stat.sum_abs2 + abs(x) ** 2,
            residual=res,
        )

    def residual_from_sums(self, n, sum_x, sum_abs2):
        """Recover S_m from (n, sum x, sum |x|^2); used to check derivability."""
        return (sum_abs2
                - 2.0 * np.real(np.conj(self._points) * sum_x)
                + n * self._abs2)

    def batch_new(self, n_runs):
        return ResidualBatch(n_runs, self.M)

    def batch_push(self, batch, rows, x):
        batch.residual[rows] += np.abs(x[:, None] - self._points[None, :]) ** 2
        batch.sum_x[rows] += x
        batch.sum_abs2[rows] += np.abs(x) ** 2
        batch.n[rows] += 1

    # -- priors -------------------------------------------------------------
    def prior_mean(self, m):
        self.check_hypothesis(m)
        c = self.config
        return np.array([c.igam_scale / (c.igam_shape - 1.0)])

    def prior_var_trace(self, m):
        self.check_hypothesis(m)
        c = self.config
        return c.igam_scale**2 / ((c.igam_shape - 1.0) ** 2 * (c.igam_shape - 2.0))

    # -- information quantities ----------------------------------------------
    def fisher_info_trace_inv(self, m, theta):
        self.check_hypothesis(m)
        if theta <= 0:
            raise ValueError("noise power must be positive")
        return theta**2

    def kl_divergence(self, m, theta_m, k, theta_k):
        """KL between complex Gaussians CN(s_m, theta_m) || CN(s_k, theta_k)."""
        self.check_hypothesis(m)
        self.check_hypothesis(k)
        if theta_m <= 0 or theta_k <= 0:
            raise ValueError("noise power must be positive")
        d2 = abs(self._points[m - 1] - self._points[k - 1]) ** 2
        return math.log(theta_k / theta_m) + theta_m / theta_k - 1.0 + d2 / theta_k

    # -- conjugate posterior ----------------------------------------------------
    def posterior_params(self, m, stat):
        """Shape and scale (a_n, b_n) of the sigma2 posterior under H_m."""
        self.check_hypothesis(m)
        c = self.config
        return c.igam_shape + stat.n, c.igam_scale + stat.residual[m - 1]

    def log_marginal(self, m, stat):
        self.check_hypothesis(m)
        c = self.config
        a, b = c.igam_shape, c.igam_scale
        n = stat.n
        s = stat.residual[m - 1]
        return (-n * _LOG_PI + a * math.log(b) - (a + n) * math.log(b + s)
                + gammaln(a + n) - gammaln(a))

    def posterior_mean(self, m, stat):
        a_n, b_n = self.posterior_params(m, stat)
        return np.array([b_n / (a_n - 1.0)])

    def posterior_var_trace(self, m, stat):
        a_n, b_n = self.posterior_params(m, stat)
        if a_n <= 2.0:
            raise ValueError("prior too heavy-tailed for a posterior variance")
        return b_n**2 / ((a_n - 1.0) ** 2 * (a_n - 2.0))

    # -- batched API ----------------------------------------------------------
    def _batch_parts(self, batch, rows, want_moments):
        c = self.config
        a, b = c.igam_shape, c.igam_scale
        n = batch.n[rows].astype(np.float64)
        bs = b + batch.residual[rows]
        a_n = (a + n)[:, None]
        logm = ((-_LOG_PI * n + a * math.log(b) - gammaln(a) + gammaln(a + n))[:, None]
                - a_n * np.log(bs))
        if not want_moments:
            return logm, None, None
        mean = bs / (a_n - 1.0)
        var = mean**2 / (a_n - 2.0)
        return logm, mean, var

    def batch_log_marginals(self, batch, rows):
        return self._batch_parts(batch, rows, want_moments=False)[0]

    def batch_posterior(self, batch, rows):
        return self._batch_parts(batch, rows, want_moments=True)
