"""Three-hypothesis Gaussian shift-in-mean scenario.

Observations are N(mu, sigma2) with sigma2 known.  The hypotheses differ
only in the prior of the mean, and the priors have disjoint supports:

    H1: mu = -(offset + G),  G ~ Gamma(shape, scale)   support (-inf, -offset]
    H2: mu ~ Uniform(lo, hi)                           support [lo, hi]
    H3: mu = offset + G,     G ~ Gamma(shape, scale)   support [offset, inf)

H1 is the exact mirror image of H3, and all H1 quantities are computed by
reflecting the running mean.  The sufficient statistic is (n, running mean).

The uniform arm has closed-form evidence and truncated-normal posterior
moments.  The Gamma arms are integrated by adaptive Gauss-Legendre
quadrature: the posterior of u = |mu| - offset is log-concave, so its mode
is the root of a quadratic; the integration window is bracketed where the
log integrand has dropped a fixed number of nats below the mode, and the
node count is doubled until two successive results agree to ``rel_tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.special import erfcx, gammaln, log_ndtr, ndtr, roots_jacobi, roots_legendre

from .model import ScenarioModel

_LOG_2PI = math.log(2.0 * math.pi)
_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


class QuadratureError(RuntimeError):
    """Raised when node doubling exhausts max_refinements without meeting rel_tol."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for the Gamma-arm quadrature."""

    node_count: int = 256
    tail_mass_cut: float = 1e-12
    refinement_factor: int = 2
    max_refinements: int = 6
    rel_tol: float = 1e-9

    def __post_init__(self):
        if self.node_count < 16:
            raise ValueError("node_count must be >= 16")
        if not 0.0 < self.tail_mass_cut < 1e-6:
            raise ValueError("tail_mass_cut must lie in (0, 1e-6)")
        if self.refinement_factor < 2:
            raise ValueError("refinement_factor must be >= 2")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")

    @property
    def drop_nats(self):
        # Window edges where the log integrand has fallen this far below the
        # mode; adds margin so the truncated tail is far below rel_tol.
        return -math.log(self.tail_mass_cut) + 20.0


@dataclass(frozen=True)
class SiMConfig:
    """Scenario parameters; defaults follow the benchmark configuration."""

    sigma2: float = 4.0
    gamma_shape: float = 1.7
    gamma_scale: float = 1.0
    offset: float = 1.3
    uniform_lo: float = -1.0
    uniform_hi: float = 1.0
    priors: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.gamma_scale <= 0:
            raise ValueError("gamma_scale must be positive")
        # Shapes <= 1 put an unbounded density spike at the support edge,
        # which the quadrature contract does not cover.
        if self.gamma_shape <= 1:
            raise ValueError("gamma_shape must exceed 1")
        if self.uniform_lo >= self.uniform_hi:
            raise ValueError("uniform_lo must be below uniform_hi")
        if self.offset < self.uniform_hi:
            raise ValueError("offset must not overlap the uniform support")


@dataclass(frozen=True)
class MeanStat:
    """Sufficient statistic: sample count and running mean."""

    n: int
    xbar: float


class MeanBatch:
    """Vectorized running means for a batch of trajectories."""

    __slots__ = ("n", "xbar")

    def __init__(self, size):
        self.n = np.zeros(size, dtype=np.int64)
        self.xbar = np.zeros(size, dtype=np.float64)


def _push_mean(n, xbar, x):
    # Incremental mean update shared by scalar and batch paths.
    return xbar + (x - xbar) / (n + 1)


# ---------------------------------------------------------------------------
# Gamma-arm quadrature kernels.  The integrand in u = |mu| - offset >= 0 is
#     exp(em1*log(u) - u*inv_scale - (u - c)^2 * q)
# with em1 = shape-1 > 0 and q = 1/(2 s^2), s^2 = sigma2/n.  It is
# log-concave, so the window search below is reliable.
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _gamma_window(em1, inv_scale, c, q, drop, lo_out, hi_out):
    n_rows = c.shape[0]
    for i in range(n_rows):
        ci = c[i]
        qi = q[i]
        s2 = 0.5 / qi
        b = inv_scale * s2 - ci
        u_mode = 0.5 * (-b + math.sqrt(b * b + 4.0 * em1 * s2))
        sig = 1.0 / math.sqrt(em1 / (u_mode * u_mode) + 2.0 * qi)
        lmax = em1 * math.log(u_mode) - u_mode * inv_scale - (u_mode - ci) ** 2 * qi
        target = lmax - drop

        # Right edge: double out from the mode until below target, then bisect.
        step = sig
        hi = u_mode + step
        for _ in range(200):
            lh = em1 * math.log(hi) - hi * inv_scale - (hi - ci) ** 2 * qi
            if lh < target:
                break
            step *= 2.0
            hi = u_mode + step
        lo_b = u_mode
        hi_b = hi
        for _ in range(45):
            mid = 0.5 * (lo_b + hi_b)
            lh = em1 * math.log(mid) - mid * inv_scale - (mid - ci) ** 2 * qi
            if lh < target:
                hi_b = mid
            else:
                lo_b = mid
        hi_out[i] = hi_b

        # Left edge: the integrand vanishes at u = 0, so bisect on [0, mode].
        lo_b = 0.0
        hi_b = u_mode
        for _ in range(45):
            mid = 0.5 * (lo_b + hi_b)
            lh = em1 * math.log(mid) - mid * inv_scale - (mid - ci) ** 2 * qi
            if lh < target:
                lo_b = mid
            else:
                hi_b = mid
        lo_out[i] = lo_b


@numba.njit(cache=True)
def _gamma_gl(lo, hi, em1, inv_scale, c, q, x, w, want_moments,
              logz_out, mean_out, var_out):
    # Plain Gauss-Legendre on [lo, hi]; integrand includes the u^em1 factor.
    # Used when the window stays clear of the support edge, where the
    # integrand is analytic.
    n_rows = lo.shape[0]
    K = x.shape[0]
    pj = np.empty(K)
    uj = np.empty(K)
    for i in range(n_rows):
        half = 0.5 * (hi[i] - lo[i])
        mid = lo[i] + half
        ci = c[i]
        qi = q[i]
        mx = -1.0e308
        for j in range(K):
            u = mid + half * x[j]
            lf = em1 * math.log(u) - u * inv_scale - (u - ci) ** 2 * qi
            pj[j] = lf
            uj[j] = u
            if lf > mx:
                mx = lf
        z = 0.0
        s1 = 0.0
        for j in range(K):
            p = math.exp(pj[j] - mx) * w[j]
            pj[j] = p
            z += p
            s1 += p * uj[j]
        logz_out[i] = mx + math.log(z * half)
        if want_moments:
            mean = s1 / z
            v = 0.0
            for j in range(K):
                du = uj[j] - mean
                v += pj[j] * du * du
            mean_out[i] = mean
            var_out[i] = v / z


@numba.njit(cache=True)
def _gamma_gj(hi, inv_scale, c, q, x, w, em1p1, want_moments,
              logz_out, mean_out, var_out):
    # Gauss-Jacobi on [0, hi] with the u^em1 factor absorbed into the
    # weights (weight (1+x)^em1).  Used when the window touches the support
    # edge, where Gauss-Legendre would only converge algebraically.
    n_rows = hi.shape[0]
    K = x.shape[0]
    pj = np.empty(K)
    uj = np.empty(K)
    for i in range(n_rows):
        half = 0.5 * hi[i]
        ci = c[i]
        qi = q[i]
        mx = -1.0e308
        for j in range(K):
            u = half * (1.0 + x[j])
            lf = -u * inv_scale - (u - ci) ** 2 * qi
            pj[j] = lf
            uj[j] = u
            if lf > mx:
                mx = lf
        z = 0.0
        s1 = 0.0
        for j in range(K):
            p = math.exp(pj[j] - mx) * w[j]
            pj[j] = p
            z += p
            s1 += p * uj[j]
        logz_out[i] = mx + math.log(z) + em1p1 * math.log(half)
        if want_moments:
            mean = s1 / z
            v = 0.0
            for j in range(K):
                du = uj[j] - mean
                v += pj[j] * du * du
            mean_out[i] = mean
            var_out[i] = v / z


@lru_cache(maxsize=32)
def _gl_nodes(K):
    x, w = roots_legendre(K)
    return np.ascontiguousarray(x), np.ascontiguousarray(w)


@lru_cache(maxsize=64)
def _gj_nodes(K, beta):
    x, w = roots_jacobi(K, 0.0, beta)
    return np.ascontiguousarray(x), np.ascontiguousarray(w)


# ---------------------------------------------------------------------------
# Uniform-arm closed forms (truncated normal), stable in far tails.
# ---------------------------------------------------------------------------


def _log_phi_diff(a, b):
    """log(Phi(b) - Phi(a)) elementwise for a < b, stable in either tail."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    flip = (a + b) > 0.0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    l_hi = log_ndtr(hi)
    l_lo = log_ndtr(lo)
    return l_hi + np.log1p(-np.exp(l_lo - l_hi))


def _mills(t):
    # Mills ratio (1 - Phi(t)) / phi(t) for t >= 0, via the scaled erfc.
    return _SQRT_HALF_PI * erfcx(t / math.sqrt(2.0))


def _truncnorm_moments(loc, scale, lo, hi):
    """Mean and variance of N(loc, scale^2) truncated to [lo, hi].

    Uses the textbook phi/Phi formulas in the central regime and a Mills
    ratio (erfcx) formulation when the window sits entirely in one tail,
    where the direct formulas lose all precision.
    """
    loc = np.asarray(loc, dtype=float)
    a = (lo - loc) / scale
    b = (hi - loc) / scale

    # Reflect right-tail windows onto the left tail; undo the sign at the end.
    refl = a > 0.0
    a_w = np.where(refl, -b, a)
    b_w = np.where(refl, -a, b)

    far = b_w < -8.0
    mean_z = np.empty_like(a_w)
    var_z = np.empty_like(a_w)

    if np.any(~far):
        an = a_w[~far]
        bn = b_w[~far]
        z = ndtr(bn) - ndtr(an)
        pa = np.exp(-0.5 * an * an - 0.5 * _LOG_2PI)
        pb = np.exp(-0.5 * bn * bn - 0.5 * _LOG_2PI)
        r1 = (pa - pb) / z
        r2 = (an * pa - bn * pb) / z
        mean_z[~far] = r1
        var_z[~far] = 1.0 + r2 - r1 * r1

    if np.any(far):
        af = a_w[far]
        bf = b_w[far]
        qf = np.exp(0.5 * (bf * bf - af * af))  # phi(a)/phi(b) <= 1
        m_a = _mills(-af)
        m_b = _mills(-bf)
        denom = m_b - qf * m_a
        ez = (qf - 1.0) / denom
        ez2 = 1.0 + (af * qf - bf) / denom
        mean_z[far] = ez
        var_z[far] = ez2 - ez * ez

    mean_z = np.where(refl, -mean_z, mean_z)
    mean = loc + scale * mean_z
    var = np.maximum(scale * scale * var_z, 0.0)
    return mean, var


class ShiftInMeanModel(ScenarioModel):
    """Gaussian shift-in-mean scenario with Gamma-tail and uniform priors."""

    obs_dtype = np.float64

    def __init__(self, config=None, quadrature=None):
        self.config = config or SiMConfig()
        self.quadrature = quadrature or QuadratureSpec()
        self.priors = np.asarray(self.config.priors, dtype=float)
        if len(self.priors) != 3:
            raise ValueError("shift-in-mean scenario has exactly 3 hypotheses")
        self._validate_priors()
        c = self.config
        self._em1 = c.gamma_shape - 1.0
        self._inv_scale = 1.0 / c.gamma_scale
        # Row-independent additive constant of the Gamma-arm log marginal:
        # Gamma density normalizer; the Gaussian normalizer is n-dependent.
        self._gamma_const = -gammaln(c.gamma_shape) - c.gamma_shape * math.log(c.gamma_scale)

    # -- generative -------------------------------------------------------
    def param_dim(self, m):
        self.check_hypothesis(m)
        return 1

    def sample_param(self, m, rng):
        self.check_hypothesis(m)
        c = self.config
        if m == 2:
            return rng.uniform(c.uniform_lo, c.uniform_hi)
        g = rng.gamma(c.gamma_shape, c.gamma_scale)
        return c.offset + g if m == 3 else -(c.offset + g)

    def sample_observation(self, m, theta, rng):
        return theta + math.sqrt(self.config.sigma2) * rng.standard_normal()

    def sample_observation_block(self, m, theta, rng, count):
        return theta + math.sqrt(self.config.sigma2) * rng.standard_normal(count)

    # -- sufficient statistic ----------------------------------------------
    def new_statistic(self):
        return MeanStat(n=0, xbar=0.0)

    def update_statistic(self, stat, x):
        return MeanStat(n=stat.n + 1, xbar=_push_mean(stat.n, stat.xbar, x))

    def batch_new(self, n_runs):
        return MeanBatch(n_runs)

    def batch_push(self, batch, rows, x):
        batch.xbar[rows] = _push_mean(batch.n[rows], batch.xbar[rows], x)
        batch.n[rows] += 1

    # -- priors -------------------------------------------------------------
    def prior_mean(self, m):
        self.check_hypothesis(m)
        c = self.config
        if m == 2:
            return np.array([0.5 * (c.uniform_lo + c.uniform_hi)])
        mu = c.offset + c.gamma_shape * c.gamma_scale
        return np.array([mu if m == 3 else -mu])

    def prior_var_trace(self, m):
        self.check_hypothesis(m)
        c = self.config
        if m == 2:
            return (c.uniform_hi - c.uniform_lo) ** 2 / 12.0
        return c.gamma_shape * c.gamma_scale**2

    # -- information quantities ----------------------------------------------
    def fisher_info_trace_inv(self, m, theta):
        self.check_hypothesis(m)
        return self.config.sigma2

    def kl_divergence(self, m, theta_m, k, theta_k):
        self.check_hypothesis(m)
        self.check_hypothesis(k)
        return (theta_m - theta_k) ** 2 / (2.0 * self.config.sigma2)

    # -- inference: uniform arm ----------------------------------------------
    def _uniform_log_marginal(self, xbar, n):
        c = self.config
        s = np.sqrt(self.config.sigma2 / n)
        a = (c.uniform_lo - xbar) / s
        b = (c.uniform_hi - xbar) / s
        width = c.uniform_hi - c.uniform_lo
        return _log_phi_diff(a, b) - math.log(width)

    def _uniform_moments(self, xbar, n):
        c = self.config
        if np.ndim(n) == 0 and n == 0:
            half_w = 0.5 * (c.uniform_hi - c.uniform_lo)
            mid = 0.5 * (c.uniform_lo + c.uniform_hi)
            return np.asarray(mid, dtype=float), np.asarray(half_w**2 / 3.0)
        s = np.sqrt(self.config.sigma2 / np.asarray(n, dtype=float))
        return _truncnorm_moments(xbar, s, c.uniform_lo, c.uniform_hi)

    # -- inference: Gamma arms -------------------------------------------------
    def _gamma_quad(self, xbar, n, want_moments):
        """Adaptive quadrature of the H3 integrand in u = mu - offset.

        Returns (log_marginal, posterior mean of mu, posterior variance);
        H1 values follow by reflecting xbar.  xbar and n are 1-D arrays.

        Windows that touch the support edge use Gauss-Jacobi nodes (the
        u^(shape-1) factor moves into the quadrature weight); windows away
        from the edge use Gauss-Legendre.  Either way the node count doubles
        until two successive results agree to rel_tol.
        """
        spec = self.quadrature
        c_cfg = self.config
        n = np.asarray(n, dtype=float)
        xbar = np.asarray(xbar, dtype=float)
        s2 = c_cfg.sigma2 / n
        q = 0.5 / s2
        c = xbar - c_cfg.offset

        size = len(xbar)
        lo = np.empty(size)
        hi = np.empty(size)
        _gamma_window(self._em1, self._inv_scale, c, q, spec.drop_nats, lo, hi)
        # Near-edge windows switch to the Jacobi rule over the full [0, hi];
        # the Legendre rule needs the singular point well outside the window.
        jac = lo < 0.15 * (hi - lo)
        lo[jac] = 0.0

        logz = np.empty(size)
        mean_u = np.zeros(size)
        var_u = np.zeros(size)

        def run(idx, K):
            lz = np.empty(len(idx))
            mu = np.zeros(len(idx))
            vu = np.zeros(len(idx))
            jj = jac[idx]
            if np.any(jj):
                x, w = _gj_nodes(K, self._em1)
                sub = idx[jj]
                lzj = np.empty(len(sub))
                muj = np.zeros(len(sub))
                vuj = np.zeros(len(sub))
                _gamma_gj(hi[sub], self._inv_scale, c[sub], q[sub], x, w,
                          self._em1 + 1.0, want_moments, lzj, muj, vuj)
                lz[jj] = lzj
                mu[jj] = muj
                vu[jj] = vuj
            if not np.all(jj):
                x, w = _gl_nodes(K)
                sub = idx[~jj]
                lzl = np.empty(len(sub))
                mul = np.zeros(len(sub))
                vul = np.zeros(len(sub))
                _gamma_gl(lo[sub], hi[sub], self._em1, self._inv_scale,
                          c[sub], q[sub], x, w, want_moments, lzl, mul, vul)
                lz[~jj] = lzl
                mu[~jj] = mul
                vu[~jj] = vul
            return lz, mu, vu

        pending = np.arange(size)
        K = spec.node_count
        prev = run(pending, K)
        for _ in range(spec.max_refinements):
            K *= spec.refinement_factor
            new = run(pending, K)
            dz = np.abs(new[0] - prev[0]) <= spec.rel_tol * np.maximum(1.0, np.abs(new[0]))
            if want_moments:
                scale = np.maximum(np.abs(new[1]), np.sqrt(np.maximum(new[2], 0.0)))
                dm = np.abs(new[1] - prev[1]) <= spec.rel_tol * np.maximum(scale, 1e-300)
                dv = np.abs(new[2] - prev[2]) <= spec.rel_tol * np.maximum(new[2], 1e-300)
                ok = dz & dm & dv
            else:
                ok = dz
            done = pending[ok]
            logz[done] = new[0][ok]
            mean_u[done] = new[1][ok]
            var_u[done] = new[2][ok]
            pending = pending[~ok]
            if len(pending) == 0:
                break
            prev = tuple(arr[~ok] for arr in new)
        else:
            raise QuadratureError(
                f"quadrature failed: {len(pending)} point(s) not converged to "
                f"rel_tol={spec.rel_tol} within {spec.max_refinements} refinements")

        log_marginal = logz + self._gamma_const - 0.5 * (np.log(2.0 * np.pi * s2))
        if not want_moments:
            return log_marginal, mean_u, var_u
        mean_mu = c_cfg.offset + mean_u
        var = np.where(var_u >= -1e-12, np.maximum(var_u, 0.0), var_u)
        if np.any(var < 0):
            raise QuadratureError("quadrature produced a negative posterior variance")
        return log_marginal, mean_mu, var

    # -- scalar API ---------------------------------------------------------
    def _one(self, m, stat, want_moments):
        xbar = np.atleast_1d(np.asarray(stat.xbar, dtype=float))
        n = np.atleast_1d(np.asarray(stat.n, dtype=float))
        if m == 2:
            lm = self._uniform_log_marginal(xbar, n)
            if want_moments:
                mean, var = self._uniform_moments(xbar, n)
                return lm[0], mean[0], var[0]
            return lm[0], None, None
        x_eff = xbar if m == 3 else -xbar
        lm, mean, var = self._gamma_quad(x_eff, n, want_moments)
        mean = mean if m == 3 else -mean
        return lm[0], mean[0], var[0]

    def log_marginal(self, m, stat):
        self.check_hypothesis(m)
        if stat.n < 1:
            raise ValueError("log_marginal requires at least one observation")
        return self._one(m, stat, want_moments=False)[0]

    def posterior_mean(self, m, stat):
        self.check_hypothesis(m)
        if stat.n == 0:
            return self.prior_mean(m)
        return np.array([self._one(m, stat, want_moments=True)[1]])

    def posterior_var_trace(self, m, stat):
        self.check_hypothesis(m)
        if stat.n == 0:
            return self.prior_var_trace(m)
        return self._one(m, stat, want_moments=True)[2]

    def summary_parts(self, stat):
        batch = MeanBatch(1)
        batch.n[0] = stat.n
        batch.xbar[0] = stat.xbar
        logm, mean, var = self.batch_posterior(batch, np.array([0]))
        return logm[0], tuple(np.array([v]) for v in mean[0]), var[0]

    # -- batched API ----------------------------------------------------------
    def batch_log_marginals(self, batch, rows):
        xbar = batch.xbar[rows]
        n = batch.n[rows]
        out = np.empty((len(rows), 3))
        out[:, 1] = self._uniform_log_marginal(xbar, n)
        # one stacked call covers H3 (head) and the mirrored H1 (tail)
        lm, _, _ = self._gamma_quad(np.concatenate([xbar, -xbar]),
                                    np.concatenate([n, n]), want_moments=False)
        out[:, 2] = lm[:len(rows)]
        out[:, 0] = lm[len(rows):]
        return out

    def batch_posterior(self, batch, rows):
        xbar = batch.xbar[rows]
        n = batch.n[rows]
        logm = np.empty((len(rows), 3))
        mean = np.empty((len(rows), 3))
        var = np.empty((len(rows), 3))
        logm[:, 1] = self._uniform_log_marginal(xbar, n)
        mean[:, 1], var[:, 1] = self._uniform_moments(xbar, n)
        lm, mu, v = self._gamma_quad(np.concatenate([xbar, -xbar]),
                                     np.concatenate([n, n]), want_moments=True)
        k = len(rows)
        logm[:, 2], mean[:, 2], var[:, 2] = lm[:k], mu[:k], v[:k]
        logm[:, 0], mean[:, 0], var[:, 0] = lm[k:], -mu[k:], v[k:]
        return logm, mean, var
