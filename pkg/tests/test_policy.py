import itertools

import numpy as np
import pytest

from upliftkit.errors import ValidationError
from upliftkit.policy import (
    AllocationProblem,
    cluster_scores,
    default_lambda_grid,
    greedy_ratio_allocate,
    lagrangian_scores,
    sweep_lambda_for_budget,
)


def brute_force_optimum(tau_r, tau_e, budget):
    """Exhaustive 0-1 knapsack optimum (n small enough to enumerate)."""
    n = len(tau_r)
    best = 0.0
    for bits in itertools.product((0, 1), repeat=n):
        z = np.array(bits)
        if z @ tau_e <= budget:
            best = max(best, float(z @ tau_r))
    return best


def seeded_instance(seed, n=15, budget_fraction=0.3):
    rng = np.random.default_rng(seed)
    tau_r = rng.uniform(0.01, 1.0, size=n)
    tau_e = rng.uniform(0.01, 1.0, size=n)
    budget = budget_fraction * tau_e.sum()
    return AllocationProblem(tau_r=tau_r, tau_e=tau_e, budget=budget)


class TestGreedy:
    def test_single_user_within_budget(self):
        problem = AllocationProblem(tau_r=[1.0], tau_e=[0.5], budget=1.0)
        result = greedy_ratio_allocate(problem)
        assert result.z.tolist() == [1]
        assert result.total_value == 1.0

    def test_single_user_over_budget(self):
        problem = AllocationProblem(tau_r=[1.0], tau_e=[2.0], budget=1.0)
        result = greedy_ratio_allocate(problem)
        assert result.z.tolist() == [0]
        assert result.total_cost == 0.0

    def test_dominant_ordering(self):
        problem = AllocationProblem(tau_r=[3.0, 2.0, 1.0], tau_e=[1.0, 1.0, 1.0], budget=2.0)
        result = greedy_ratio_allocate(problem)
        assert result.z.tolist() == [1, 1, 0]
        assert result.total_value == 5.0

    def test_greedy_within_one_item_of_bruteforce(self):
        for seed in range(30):
            problem = seeded_instance(seed)
            result = greedy_ratio_allocate(problem)
            optimum = brute_force_optimum(problem.tau_r, problem.tau_e, problem.budget)
            assert result.total_value >= optimum - problem.tau_r.max() - 1e-12
            assert result.total_cost <= problem.budget

    def test_budget_respected_exactly(self):
        for seed in range(20):
            problem = seeded_instance(seed, n=40)
            result = greedy_ratio_allocate(problem)
            assert result.total_cost <= problem.budget
            np.testing.assert_allclose(
                result.total_cost, float(problem.tau_e @ result.z), atol=0
            )
            np.testing.assert_allclose(
                result.total_value, float(problem.tau_r @ result.z), atol=0
            )

    def test_nonpositive_costs_are_floored_and_admitted_first(self):
        problem = AllocationProblem(
            tau_r=[0.5, 2.0], tau_e=[-1.0, 1.0], budget=0.5
        )
        result = greedy_ratio_allocate(problem)
        # The engagement-gain user costs only the floor and is taken first;
        # the expensive user does not fit.
        assert result.z.tolist() == [1, 0]

    def test_nonfinite_inputs_rejected(self):
        with pytest.raises(ValidationError):
            AllocationProblem(tau_r=[np.nan], tau_e=[1.0], budget=1.0)
        with pytest.raises(ValidationError):
            AllocationProblem(tau_r=[1.0], tau_e=[1.0], budget=0.0)


class TestLagrangian:
    def test_lambda_zero_returns_tau_r(self):
        tau_r = np.array([1.0, -2.0, 3.0])
        tau_e = np.array([0.5, 0.5, 0.5])
        np.testing.assert_array_equal(lagrangian_scores(tau_r, tau_e, 0.0), tau_r)

    def test_arithmetic(self):
        assert lagrangian_scores(np.array([2.0]), np.array([1.0]), 0.5)[0] == 1.5

    def test_common_scaling_preserves_ranking(self):
        rng = np.random.default_rng(1)
        tau_r = rng.uniform(0, 1, size=50)
        tau_e = rng.uniform(0.1, 1, size=50)
        s = lagrangian_scores(tau_r, tau_e, 0.7)
        s_scaled = lagrangian_scores(3.5 * tau_r, 3.5 * tau_e, 0.7)
        np.testing.assert_allclose(s_scaled, 3.5 * s, rtol=1e-12)
        np.testing.assert_array_equal(np.argsort(-s), np.argsort(-s_scaled))

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValidationError):
            lagrangian_scores(np.array([1.0]), np.array([1.0]), -0.1)


class TestLambdaSweep:
    def test_lambda_zero_selects_all_positive_value(self):
        problem = AllocationProblem(
            tau_r=[1.0, -0.5, 2.0], tau_e=[0.1, 0.1, 0.1], budget=10.0
        )
        result = sweep_lambda_for_budget(problem, np.array([0.0]))
        assert result.feasible
        assert result.allocation.z.tolist() == [1, 0, 1]

    def test_dense_grid_close_to_greedy(self):
        for seed in range(10):
            problem = seeded_instance(seed)
            greedy = greedy_ratio_allocate(problem)
            grid = default_lambda_grid(problem.tau_r, problem.tau_e, 200)
            swept = sweep_lambda_for_budget(problem, grid)
            assert swept.feasible
            assert swept.allocation.total_value >= greedy.total_value - problem.tau_r.max()

    def test_huge_lambda_empty_selection(self):
        problem = seeded_instance(3)
        big = problem.tau_r.max() / problem.tau_e.min() + 1.0
        result = sweep_lambda_for_budget(problem, np.array([big]))
        assert result.allocation.n_selected == 0
        assert result.allocation.total_cost == 0.0

    def test_infeasible_grid_flagged(self):
        problem = AllocationProblem(tau_r=[5.0, 5.0], tau_e=[1.0, 1.0], budget=0.5)
        result = sweep_lambda_for_budget(problem, np.array([0.0, 0.1]))
        assert not result.feasible
        assert result.allocation.n_selected == 0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValidationError):
            sweep_lambda_for_budget(seeded_instance(1), np.array([]))


class TestClusterScores:
    def test_k_equals_n_unchanged(self):
        scores = np.random.default_rng(2).normal(size=12)
        np.testing.assert_array_equal(cluster_scores(scores, 12, seed=0), scores)

    def test_k_one_global_mean(self):
        scores = np.array([1.0, 2.0, 3.0, 10.0])
        np.testing.assert_allclose(cluster_scores(scores, 1, seed=0), 4.0)

    def test_two_clumps_mapped_to_their_means(self):
        low = np.array([0.0, 0.1, 0.2])
        high = np.array([10.0, 10.1, 10.4])
        scores = np.concatenate([low, high])
        out = cluster_scores(scores, 2, seed=1)
        np.testing.assert_allclose(out[:3], low.mean())
        np.testing.assert_allclose(out[3:], high.mean())

    def test_between_cluster_order_preserved(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=200)
        out = cluster_scores(scores, 8, seed=4)
        # Members of a higher-mean cluster all outrank members of lower ones.
        levels = np.unique(out)
        for a, b in zip(levels, levels[1:]):
            assert a < b
        for value in levels:
            members = scores[out == value]
            below = scores[out < value]
            if below.size:
                assert members.min() >= below.max() - 1e-9

    def test_k_larger_than_n_rejected(self):
        with pytest.raises(ValidationError):
            cluster_scores(np.zeros(3), 4, seed=0)
