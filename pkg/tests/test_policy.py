"""Cost function, stopping rule, decision rule, and trajectory execution."""

import numpy as np
import pytest

import seqjde
from seqjde import (CostCoefficients, PosteriorSummary, ao_should_stop, cost_g,
                    decide, decision_cost, normalized_cost_limit, prior_summary,
                    run_policy, trace_paths)
from seqjde.montecarlo import derive_seeds


def make_summary(post, var, means=None):
    post = np.asarray(post, dtype=float)
    var = np.asarray(var, dtype=float)
    if means is None:
        means = tuple(np.array([0.0]) for _ in post)
    return PosteriorSummary(n=1, log_marginal=np.zeros(len(post)),
                            hyp_post=post, post_mean=means, post_var_trace=var)


class TestCostCoefficients:
    def test_validation(self):
        with pytest.raises(ValueError):
            CostCoefficients([1.0, -1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            CostCoefficients([1.0, np.inf], [1.0, 1.0])
        with pytest.raises(ValueError):
            CostCoefficients([1.0], [1.0, 2.0])

    def test_normalized_forms(self):
        c = CostCoefficients([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        assert c.total == 21.0
        np.testing.assert_allclose(c.c_bar, 1 / 21)
        np.testing.assert_allclose(
            np.concatenate([c.lambda_det_bar, c.lambda_est_bar]).sum(), 1.0)
        rt = CostCoefficients.from_stacked(c.stacked())
        np.testing.assert_array_equal(rt.lambda_det, c.lambda_det)


class TestDecisionCost:
    def test_certainty_costs_nothing(self):
        c = CostCoefficients([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        s = make_summary([1.0, 0.0, 0.0], [0.0, 0.5, 0.5])
        assert decision_cost(1, s, c) == 0.0

    def test_hand_value(self):
        c = CostCoefficients([3.0, 3.0, 3.0], [3.0, 3.0, 3.0])
        s = make_summary([1 / 3] * 3, [0.3, 1.0, 1.0])
        np.testing.assert_allclose(decision_cost(1, s, c), 2.0 + 0.3, rtol=1e-12)

    def test_nonnegative_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            M = int(rng.integers(2, 6))
            c = CostCoefficients(rng.uniform(0.1, 50, M), rng.uniform(0.1, 50, M))
            post = rng.dirichlet(np.ones(M))
            var = rng.uniform(0, 3, M)
            s = make_summary(post, var)
            g = cost_g(s, c)
            assert g >= 0.0
            assert all(g <= decision_cost(m, s, c) + 1e-12 for m in range(1, M + 1))

    def test_symmetric_two_hypotheses(self):
        c = CostCoefficients([2.0, 2.0], [5.0, 5.0])
        s = make_summary([0.5, 0.5], [0.4, 0.4])
        assert decision_cost(1, s, c) == decision_cost(2, s, c) == cost_g(s, c)

    def test_prior_cost_shift_in_mean(self, sim_model):
        # with every coefficient 30: D_m = 30*(2/3) + 30*(1/3)*prior_var_m
        c = CostCoefficients([30.0] * 3, [30.0] * 3)
        g = cost_g(prior_summary(sim_model), c)
        np.testing.assert_allclose(g, 20.0 + 10.0 / 3.0, rtol=1e-12)


class TestStoppingRule:
    def test_boundary(self):
        assert ao_should_stop(0.5, 0)
        assert not ao_should_stop(41.0, 39)
        assert ao_should_stop(41.0, 40)
        with pytest.raises(ValueError):
            ao_should_stop(1.0, -1)

    def test_small_coefficients_always_stop_immediately(self):
        rng = np.random.default_rng(1)
        c = CostCoefficients([1.0] * 3, [1.0] * 3)
        for _ in range(100):
            post = rng.dirichlet(np.ones(3))
            var = rng.uniform(0, 2, 3)
            # g <= sum of det coefficients + max est term stays below 1 + ...
            g = cost_g(make_summary(post, var), c)
            assert ao_should_stop(g, 0) or g > 1.0
        # the bound g <= 1 holds for unit coefficients at simplex extremes
        g = cost_g(make_summary([1.0, 0, 0], [0.0, 1, 1]), c)
        assert ao_should_stop(g, 0)


class TestDecide:
    def test_dominant_posterior(self):
        c = CostCoefficients([1.0] * 3, [1.0] * 3)
        s = make_summary([0.98, 0.01, 0.01], [0.5, 0.5, 0.5])
        assert decide(s, c) == 1

    def test_tie_breaks_to_smallest_index(self):
        c = CostCoefficients([1.0, 1.0], [1.0, 1.0])
        s = make_summary([0.5, 0.5], [0.3, 0.3])
        assert decide(s, c) == 1

    def test_scaling_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            M = int(rng.integers(2, 6))
            c = CostCoefficients(rng.uniform(0.5, 20, M), rng.uniform(0.5, 20, M))
            gamma = float(10.0 ** rng.uniform(-6, 6))
            scaled = CostCoefficients(gamma * c.lambda_det, gamma * c.lambda_est)
            s = make_summary(rng.dirichlet(np.ones(M)), rng.uniform(0, 2, M))
            assert decide(s, c) == decide(s, scaled)


class TestRunPolicy:
    def test_tiny_coefficients_stop_at_zero(self, sim_model):
        eps = 1e-6
        c = CostCoefficients([eps] * 3, [eps] * 3)
        t = run_policy(sim_model, c, seed=3)
        assert t.tau == 0
        assert t.decision == 2  # smallest prior variance wins the prior argmin
        assert t.estimate[0] == 0.0
        assert not t.capped

    def test_seed_determinism(self, sim_model):
        c = seqjde.default_initial_coefficients([0.05] * 3, [0.2, 0.15, 0.1])
        a = run_policy(sim_model, c, seed=12345)
        b = run_policy(sim_model, c, seed=12345)
        assert a == b
        assert a.tau >= 1 and 1 <= a.decision <= 3

    def test_cap(self, qam_model):
        c = CostCoefficients([1e8] * 16, [1e8] * 16)
        t = run_policy(qam_model, c, seed=4, n_max=5)
        assert t.capped and t.tau == 5
        assert 1 <= t.decision <= 16

    def test_stop_boundary_along_path(self, sim_model):
        # tau is exactly the first n with g <= n + 1 on the same path
        c = seqjde.default_initial_coefficients([0.05] * 3, [0.2, 0.15, 0.1])
        seeds = derive_seeds(99, np.arange(24))
        rec, _, _ = trace_paths(sim_model, c, seeds, 120)
        g = rec["g"]
        from seqjde._engine import simulate
        from seqjde.policy import AoPolicy

        out = simulate(sim_model, AoPolicy(c), seeds, n_max=120)
        thresh = np.arange(121) + 1.0
        for i in range(24):
            crossings = np.nonzero(g[i] <= thresh)[0]
            assert out["tau"][i] == crossings[0]
            assert np.all(g[i, :crossings[0]] > thresh[:crossings[0]])
            np.testing.assert_allclose(out["g_final"][i], g[i, crossings[0]],
                                       rtol=1e-12)


class TestNormalizedCostLimit:
    def test_substitution_values(self, sim_model, qam_model):
        # shift-in-mean: lambda_est_bar = 0.1 at sigma2 = 4 gives 0.4
        c = CostCoefficients([20.0, 20.0, 20.0], [10.0, 10.0, 10.0])
        assert c.lambda_est_bar[0] == pytest.approx(1 / 9)
        c2 = CostCoefficients([25.0, 25.0, 20.0], [10.0, 10.0, 10.0])
        np.testing.assert_allclose(normalized_cost_limit(sim_model, 1, -3.0, c2),
                                   0.1 * 4.0, rtol=1e-12)
        cq = CostCoefficients([2.0] * 16, np.r_[[2.0], np.full(15, 0.4)])
        np.testing.assert_allclose(cq.lambda_est_bar[0], 0.05, rtol=1e-12)
        np.testing.assert_allclose(normalized_cost_limit(qam_model, 1, 1.0, cq),
                                   0.05, rtol=1e-12)

    def test_limit_reached_on_paths(self, sim_model):
        # light version of the asymptotic check; the acceptance suite runs
        # the full-depth one
        c = seqjde.default_initial_coefficients([0.05] * 3, [0.2, 0.15, 0.1])
        seeds = derive_seeds(7, np.arange(60))
        rec, tm, theta = trace_paths(sim_model, c, seeds, 800)
        g = rec["g"]
        assert np.all(g > 0)
        limits = np.array([normalized_cost_limit(sim_model, int(m), t, c)
                           for m, t in zip(tm, theta)])
        ratio = 800 * (g[:, 800] / c.total) / limits
        assert abs(np.median(ratio) - 1.0) < 0.35


class TestAsymptoticOptimality:
    @pytest.mark.parametrize("scenario", ["qam", "shift_in_mean"])
    def test_cost_ratio_shrinks_with_levels(self, scenario, sim_model, qam_model):
        # as the nominal levels halve, the realized cost of the threshold
        # rule approaches the per-path oracle optimum min_n (n + g_n)
        if scenario == "qam":
            model, n_steps, n_runs = qam_model, 1500, 160
            alpha0 = np.full(16, 0.05)
            beta0 = np.full(16, 0.05)
        else:
            model, n_steps, n_runs = sim_model, 1200, 120
            alpha0 = np.array([0.05] * 3)
            beta0 = np.array([0.2, 0.15, 0.1])
        seeds = derive_seeds(2025, np.arange(n_runs))
        ratios = []
        for j in range(4):
            c = seqjde.default_initial_coefficients(alpha0 / 2**j, beta0 / 2**j)
            rec, _, _ = trace_paths(model, c, seeds, n_steps, forced_m=None)
            g = rec["g"]
            thresh = np.arange(n_steps + 1) + 1.0
            cost_rule = np.empty(n_runs)
            cost_oracle = np.empty(n_runs)
            for i in range(n_runs):
                hits = np.nonzero(g[i] <= thresh)[0]
                tau = hits[0] if len(hits) else n_steps
                cost_rule[i] = tau + g[i, tau]
                cost_oracle[i] = (np.arange(n_steps + 1) + g[i]).min()
            ratios.append(cost_rule.mean() / cost_oracle.mean())
        assert all(r >= 1.0 - 1e-12 for r in ratios)
        assert all(b < a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] < 1.2
