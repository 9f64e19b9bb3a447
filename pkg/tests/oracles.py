"""Independent numerical oracles shared by the test modules.

Everything here recomputes target quantities by a different method than the
package: graded trapezoid grids for the shift-in-mean posterior integrals,
Simpson integration on a log-noise-power grid for the QAM evidence, and
mpmath for extended-precision references.  Nothing imports package
internals beyond plain configuration values.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import simpson
from scipy.special import gammaln

# shift-in-mean scenario constants (defaults under test)
SIGMA2 = 4.0
SHAPE = 1.7
SCALE = 1.0
OFFSET = 1.3
UNI_LO, UNI_HI = -1.0, 1.0

TRAP_NODES = 100_000


def _gamma_pilot(xbar, n):
    """Analytic mode and curvature scale of the H3 posterior in u = mu - offset.

    The log integrand (shape-1)*log u - u/scale - (u - c)^2/(2 s^2) is
    concave; its stationary point solves a quadratic.
    """
    s2 = SIGMA2 / n
    c = xbar - OFFSET
    b = s2 / SCALE - c
    u_star = 0.5 * (-b + np.sqrt(b * b + 4.0 * (SHAPE - 1.0) * s2))
    sig = 1.0 / np.sqrt((SHAPE - 1.0) / u_star**2 + 1.0 / s2)
    return u_star, sig


def _grid_for_gamma_arm(xbar, n):
    """Graded 1e5-node grid in u: half the nodes resolve the core of the
    posterior bulk, a band covers its skewed tail, and the rest cover the
    prior range and the likelihood location."""
    u_star, sig = _gamma_pilot(xbar, n)
    s = np.sqrt(SIGMA2 / n)
    core = np.linspace(max(0.0, u_star - 8.0 * sig), u_star + 8.0 * sig,
                       TRAP_NODES // 2)
    band = np.linspace(max(0.0, u_star - 40.0 * sig), u_star + 120.0 * sig,
                       int(0.3 * TRAP_NODES))
    coarse_hi = max(60.0 * SCALE, xbar - OFFSET + 12.0 * s, 1.5 * band[-1])
    coarse = np.linspace(0.0, coarse_hi, TRAP_NODES - len(core) - len(band))
    return np.unique(np.concatenate([core, band, coarse]))


def _log_trapezoid_moments(grid, logf):
    mx = logf.max()
    f = np.exp(logf - mx)
    z = np.trapezoid(f, grid)
    mean = np.trapezoid(f * grid, grid) / z
    var = np.trapezoid(f * (grid - mean) ** 2, grid) / z
    return mx + np.log(z), mean, var


def gamma_arm_oracle(xbar, n):
    """(log marginal, posterior mean, posterior var) for H3 at (n, xbar)."""
    s2 = SIGMA2 / n
    u = _grid_for_gamma_arm(xbar, n)
    c = xbar - OFFSET
    with np.errstate(divide="ignore"):
        logf = ((SHAPE - 1.0) * np.log(u) - u / SCALE
                - gammaln(SHAPE) - SHAPE * np.log(SCALE)
                - 0.5 * np.log(2.0 * np.pi * s2) - (u - c) ** 2 / (2.0 * s2))
    logf[u == 0.0] = -np.inf
    logz, mean_u, var = _log_trapezoid_moments(u, logf)
    return logz, OFFSET + mean_u, var


def mirror_arm_oracle(xbar, n):
    """Same for H1, integrating directly over its own support mu <= -offset."""
    s2 = SIGMA2 / n
    u = _grid_for_gamma_arm(-xbar, n)  # u = -(mu + offset)
    mu = -OFFSET - u
    with np.errstate(divide="ignore"):
        logf = ((SHAPE - 1.0) * np.log(u) - u / SCALE
                - gammaln(SHAPE) - SHAPE * np.log(SCALE)
                - 0.5 * np.log(2.0 * np.pi * s2) - (mu - xbar) ** 2 / (2.0 * s2))
    logf[u == 0.0] = -np.inf
    mx = logf.max()
    f = np.exp(logf - mx)
    # integrate in u (monotone decreasing mu); orientation cancels in ratios
    z = np.trapezoid(f, u)
    mean = np.trapezoid(f * mu, u) / z
    var = np.trapezoid(f * (mu - mean) ** 2, u) / z
    return mx + np.log(z), mean, var


def uniform_arm_oracle(xbar, n):
    """(log marginal, posterior mean, posterior var) for H2 at (n, xbar)."""
    s = np.sqrt(SIGMA2 / n)
    center = np.clip(xbar, UNI_LO, UNI_HI)
    if UNI_LO < xbar < UNI_HI:
        delta = s
    else:
        delta = s * s / max(abs(xbar - center), s)
    core = np.linspace(max(UNI_LO, center - 8 * delta),
                       min(UNI_HI, center + 8 * delta), TRAP_NODES // 2)
    band = np.linspace(max(UNI_LO, center - 80 * delta),
                       min(UNI_HI, center + 80 * delta), int(0.3 * TRAP_NODES))
    coarse = np.linspace(UNI_LO, UNI_HI, TRAP_NODES - len(core) - len(band))
    mu = np.unique(np.concatenate([core, band, coarse]))
    logf = (-0.5 * np.log(2.0 * np.pi * s * s) - (mu - xbar) ** 2 / (2.0 * s * s)
            - np.log(UNI_HI - UNI_LO))
    return _log_trapezoid_moments(mu, logf)


def truncnorm_reference(loc, scale, lo, hi, dps=60):
    """Truncated-normal mean/variance at extended precision (mpmath).

    Right-tail windows are reflected onto the left tail, where the CDF
    difference stays representable at any depth.
    """
    import mpmath as mp

    with mp.workdps(dps):
        loc_, scale_ = mp.mpf(loc), mp.mpf(scale)
        a = (mp.mpf(lo) - loc_) / scale_
        b = (mp.mpf(hi) - loc_) / scale_
        sign = 1
        if a + b > 0:
            a, b = -b, -a
            sign = -1
        phi = lambda t: mp.e ** (-t * t / 2) / mp.sqrt(2 * mp.pi)
        Phi = lambda t: mp.ncdf(t)
        z = Phi(b) - Phi(a)
        r1 = (phi(a) - phi(b)) / z
        r2 = (a * phi(a) - b * phi(b)) / z
        mean = loc_ + scale_ * sign * r1
        var = scale_ * scale_ * (1 + r2 - r1 * r1)
        return float(mean), float(var)


def qam_evidence_oracle(n, s_res, a=2.1, b=0.9, nodes=400_001):
    """(log evidence, posterior mean, posterior var) of the noise power by
    Simpson integration over t = log sigma2, independent of the conjugate
    algebra."""
    t_star = np.log((s_res + b) / (n + a))
    half = 50.0 / np.sqrt(n + a)
    t = np.linspace(t_star - half - 3.0, t_star + half + 3.0, nodes)
    logf = (-n * np.log(np.pi) - (n + a) * t - (s_res + b) * np.exp(-t)
            + a * np.log(b) - gammaln(a))
    mx = logf.max()
    f = np.exp(logf - mx)
    z = simpson(f, x=t)
    sig2 = np.exp(t)
    mean = simpson(f * sig2, x=t) / z
    var = simpson(f * (sig2 - mean) ** 2, x=t) / z
    return mx + np.log(z), mean, var


def paired_objective_derivative(model, coeffs_plus, coeffs_minus, h2, sim):
    """Central finite difference of the stopping objective with common random
    numbers; returns (derivative, standard error from per-run differences)."""
    import seqjde

    v_plus, m_plus, _ = seqjde.objective_values(model, coeffs_plus, sim)
    v_minus, m_minus, _ = seqjde.objective_values(model, coeffs_minus, sim)
    assert np.array_equal(m_plus, m_minus)
    diff = (v_plus - v_minus) / h2
    mean = 0.0
    var = 0.0
    for m in range(1, model.M + 1):
        sel = m_plus == m
        p = model.priors[m - 1]
        mean += p * diff[sel].mean()
        var += p * p * diff[sel].var(ddof=1) / sel.sum()
    return mean, np.sqrt(var)
