"""Batched trajectory simulator (internal).

Runs many sequential trajectories in lockstep so the per-step posterior
math vectorizes across them.  Every per-run quantity is a pure function of
that run's own seed: each run owns an RNG stream, observations are drawn in
fixed-size blocks from it, and all vectorized math is row-independent.
A run therefore produces bit-identical results whether it executes alone,
inside any batch, or on any worker count.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 32


def _draw_setup(model, seeds, forced_m):
    """Per-run generators, hypotheses (0-based), and parameters."""
    n_runs = len(seeds)
    gens = [np.random.default_rng(int(s)) for s in seeds]
    cum = np.cumsum(model.priors)
    cum[-1] = 1.0
    true_m0 = np.empty(n_runs, dtype=np.int64)
    theta = np.empty(n_runs, dtype=np.float64)
    for i, g in enumerate(gens):
        if forced_m is None:
            m0 = int(np.searchsorted(cum, g.random(), side="right"))
        else:
            m0 = int(forced_m[i]) - 1
        true_m0[i] = m0
        theta[i] = model.sample_param(m0 + 1, g)
    return gens, true_m0, theta


def _refill(model, buf, rows, true_m0, theta, gens):
    for i in rows:
        buf[i] = model.sample_observation_block(int(true_m0[i]) + 1, theta[i],
                                                gens[i], _BLOCK)


def simulate(model, policy, seeds, n_max, forced_m=None):
    """Run one trajectory per seed until the policy stops or n_max is hit.

    Returns a dict of per-run arrays: true_m, theta, tau, decision (1-based),
    estimate, capped, g_final.
    """
    n_runs = len(seeds)
    gens, true_m0, theta = _draw_setup(model, seeds, forced_m)

    tau = np.zeros(n_runs, dtype=np.int64)
    decision = np.zeros(n_runs, dtype=np.int64)
    estimate = np.zeros(n_runs, dtype=np.float64)
    g_final = np.full(n_runs, np.nan)
    capped = np.zeros(n_runs, dtype=bool)

    batch = model.batch_new(n_runs)
    buf = np.empty((n_runs, _BLOCK), dtype=model.obs_dtype)
    active = np.arange(n_runs)

    ps = policy.prior_stop(model)
    if ps is not None:
        dec0, g0 = ps
        decision[:] = dec0 + 1
        estimate[:] = model.prior_mean(dec0 + 1)[0]
        g_final[:] = g0
        return {"true_m": true_m0 + 1, "theta": theta, "tau": tau,
                "decision": decision, "estimate": estimate,
                "capped": capped, "g_final": g_final}

    n = 0
    while active.size and n < n_max:
        col = n % _BLOCK
        if col == 0:
            _refill(model, buf, active, true_m0, theta, gens)
        model.batch_push(batch, active, buf[active, col])
        n += 1

        if policy.needs_moments:
            logm, mean, var = model.batch_posterior(batch, active)
        else:
            logm = model.batch_log_marginals(batch, active)
            mean = var = None
        stop, dec0, g = policy.stop_rule(n, logm, mean, var, model)

        if np.any(stop):
            rows = active[stop]
            d0 = dec0[stop]
            tau[rows] = n
            decision[rows] = d0 + 1
            if mean is None:
                _, mean_s, _ = model.batch_posterior(batch, rows)
                estimate[rows] = mean_s[np.arange(len(rows)), d0]
            else:
                estimate[rows] = mean[stop][np.arange(len(rows)), d0]
            g_final[rows] = g[stop]
            active = active[~stop]

    if active.size:
        logm, mean, var = model.batch_posterior(batch, active)
        dec0, g = policy.cap_rule(logm, mean, var, model)
        tau[active] = n
        decision[active] = dec0 + 1
        estimate[active] = mean[np.arange(len(active)), dec0]
        g_final[active] = g
        capped[active] = True

    return {"true_m": true_m0 + 1, "theta": theta, "tau": tau,
            "decision": decision, "estimate": estimate,
            "capped": capped, "g_final": g_final}


def record_paths(model, seeds, n_steps, stats_fn, forced_m=None):
    """Stream every run for exactly n_steps samples, recording per-step stats.

    ``stats_fn(n, logm, mean, var, true_m0) -> dict of (n_runs,) arrays`` is
    invoked after each sample and once for the empty sample (n = 0, with the
    prior summary).  Outputs are stacked into (n_runs, n_steps + 1) arrays
    whose column n is the state after n samples.

    Returns (records, true_m (1-based), theta).
    """
    n_runs = len(seeds)
    gens, true_m0, theta = _draw_setup(model, seeds, forced_m)
    batch = model.batch_new(n_runs)
    buf = np.empty((n_runs, _BLOCK), dtype=model.obs_dtype)
    rows = np.arange(n_runs)

    M = model.M
    logm0 = np.zeros((n_runs, M))
    mean0 = np.tile([model.prior_mean(m)[0] for m in range(1, M + 1)], (n_runs, 1))
    var0 = np.tile([model.prior_var_trace(m) for m in range(1, M + 1)], (n_runs, 1))
    stats = stats_fn(0, logm0, mean0, var0, true_m0)
    records = {k: np.full((n_runs, n_steps + 1), np.nan) for k in stats}
    for k, v in stats.items():
        records[k][:, 0] = v

    for n in range(1, n_steps + 1):
        col = (n - 1) % _BLOCK
        if col == 0:
            _refill(model, buf, rows, true_m0, theta, gens)
        model.batch_push(batch, rows, buf[:, col])
        logm, mean, var = model.batch_posterior(batch, rows)
        stats = stats_fn(n, logm, mean, var, true_m0)
        for k, v in stats.items():
            records[k][:, n] = v

    return records, true_m0 + 1, theta


def trajectory_at(out, i):
    """Build a Trajectory object from simulate() output row i."""
    from .policy import Trajectory

    return Trajectory(
        true_m=int(out["true_m"][i]),
        true_theta=np.atleast_1d(out["theta"][i]),
        tau=int(out["tau"][i]),
        decision=int(out["decision"][i]),
        estimate=np.atleast_1d(out["estimate"][i]),
        capped=bool(out["capped"][i]),
        g_final=float(out["g_final"][i]),
    )
