"""Posterior combination math and the convergence behavior it inherits."""

import numpy as np
import pytest

import seqjde
from seqjde import (EvidenceError, MeanStat, hypothesis_posteriors,
                    prior_summary, summarize, trace_paths)
from seqjde.montecarlo import derive_seeds


class TestHypothesisPosteriors:
    def test_symmetric_inputs_give_uniform(self):
        post = hypothesis_posteriors(np.zeros(3), np.log([1 / 3] * 3))
        np.testing.assert_allclose(post, 1 / 3, rtol=1e-14)

    def test_no_data_returns_prior(self):
        priors = np.array([0.5, 0.3, 0.2])
        post = hypothesis_posteriors(np.zeros(3), np.log(priors))
        np.testing.assert_allclose(post, priors, rtol=1e-14)

    def test_extreme_evidence_gap(self):
        # exact value at extended precision: 1 / (1 + 2 exp(-1000))
        import mpmath as mp

        with mp.workdps(500):
            expected = float(1 / (1 + 2 * mp.e**-1000))
        post = hypothesis_posteriors([-1000.0, 0.0, -1000.0], np.log([1 / 3] * 3))
        assert post[1] >= 1 - 1e-300
        assert post[1] == expected
        assert post[0] >= 0 and post[2] >= 0

    def test_degenerate_evidence_raises(self):
        with pytest.raises(EvidenceError):
            hypothesis_posteriors([-np.inf] * 3, np.log([1 / 3] * 3))

    def test_simplex_property_random(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            m = rng.integers(2, 8)
            logm = rng.uniform(-700, 700, m)
            prior = rng.dirichlet(np.ones(m))
            post = hypothesis_posteriors(logm, np.log(prior))
            assert np.all(post >= 0)
            assert abs(post.sum() - 1.0) < 1e-10


class TestSummaries:
    def test_prior_summary_shift_in_mean(self, sim_model):
        ps = prior_summary(sim_model)
        np.testing.assert_allclose(ps.hyp_post, 1 / 3, rtol=1e-14)
        # uniform variance (u-l)^2/12 and Gamma shape*scale^2
        np.testing.assert_allclose(ps.post_var_trace, [1.7, 1 / 3, 1.7], rtol=1e-12)
        np.testing.assert_allclose([v[0] for v in ps.post_mean], [-3.0, 0.0, 3.0],
                                   rtol=1e-12)

    def test_summarize_at_zero_matches_prior(self, sim_model, qam_model):
        for model in (sim_model, qam_model):
            s = summarize(model, model.new_statistic())
            p = prior_summary(model)
            np.testing.assert_array_equal(s.hyp_post, p.hyp_post)
            np.testing.assert_array_equal(s.post_var_trace, p.post_var_trace)
            assert s.n == 0
            np.testing.assert_array_equal(s.log_marginal, np.zeros(model.M))

    def test_deep_in_h3_support(self, sim_model):
        s = summarize(sim_model, MeanStat(n=50, xbar=2.5))
        assert s.hyp_post[2] > 0.99

    def test_qam_recovers_transmitted_symbol(self, qam_model):
        rng = np.random.default_rng(5)
        stat = qam_model.new_statistic()
        for x in qam_model.sample_observation_block(1, 0.4, rng, 30):
            stat = qam_model.update_statistic(stat, x)
        s = summarize(qam_model, stat)
        assert int(np.argmax(s.hyp_post)) == 0

    def test_statistic_incremental_matches_recompute(self, sim_model, qam_model):
        rng = np.random.default_rng(9)
        xs = rng.normal(0.4, 2.0, 137)
        stat = sim_model.new_statistic()
        for x in xs:
            stat = sim_model.update_statistic(stat, x)
        assert stat.n == 137
        np.testing.assert_allclose(stat.xbar, xs.mean(), rtol=1e-12)
        s_inc = summarize(sim_model, stat)
        s_new = summarize(sim_model, MeanStat(n=137, xbar=float(xs.mean())))
        np.testing.assert_allclose(s_inc.hyp_post, s_new.hyp_post, rtol=1e-10)

        zs = qam_model.sample_observation_block(7, 0.9, rng, 64)
        qstat = qam_model.new_statistic()
        for z in zs:
            qstat = qam_model.update_statistic(qstat, z)
        recomputed = qam_model.residual_from_sums(qstat.n, qstat.sum_x, qstat.sum_abs2)
        np.testing.assert_allclose(qstat.residual, recomputed, rtol=1e-10)


def _initial_coeffs(model):
    if model.M == 3:
        return seqjde.default_initial_coefficients([0.05] * 3, [0.2, 0.15, 0.1])
    return seqjde.default_initial_coefficients([0.01] * model.M, [0.01] * model.M)


class TestPosteriorConsistency:
    """The posterior of the true hypothesis converges, exponentially fast."""

    def test_true_hypothesis_dominates(self, sim_model):
        seeds = derive_seeds(101, np.arange(200))
        rec, _, _ = trace_paths(sim_model, _initial_coeffs(sim_model), seeds, 200)
        post = rec["post_true"]
        assert np.median(post[:, 200]) > 0.99
        # median log(1 - post) falls roughly linearly in n
        tail = np.log(np.maximum(1.0 - post, 1e-300))
        med = np.median(tail, axis=0)
        ns = np.arange(20, 201)
        slope = np.polyfit(ns, med[20:], 1)[0]
        assert slope < -0.01

    @pytest.mark.parametrize("scenario", ["shift_in_mean", "qam"])
    def test_scaled_posterior_variance_limit(self, scenario, sim_model, qam_model):
        # n * posterior variance approaches the inverse Fisher information
        model = sim_model if scenario == "shift_in_mean" else qam_model
        n_steps = 2000
        seeds = derive_seeds(77, np.arange(200))
        rec, true_m, theta = trace_paths(model, _initial_coeffs(model), seeds, n_steps)
        limit = np.array([model.fisher_info_trace_inv(int(m), t)
                          for m, t in zip(true_m, theta)])
        ratio = n_steps * rec["var_true"][:, n_steps] / limit
        assert np.median(np.abs(ratio - 1.0)) <= 0.10

    def test_mean_cost_stays_bounded(self, sim_model):
        # E[normalized cost] <= 2 * max prior variance * max normalized
        # estimation coefficient, at every sample count
        coeffs = _initial_coeffs(sim_model)
        seeds = derive_seeds(55, np.arange(200))
        rec, _, _ = trace_paths(sim_model, coeffs, seeds, 200)
        gbar = rec["g"] / coeffs.total
        prior_var = max(sim_model.prior_var_trace(m) for m in (1, 2, 3))
        bound = 2.0 * coeffs.lambda_est_bar.max() * prior_var
        assert np.all(gbar.mean(axis=0) <= bound + 1e-12)
