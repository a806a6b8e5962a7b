import math
import unittest

import numpy as np

from rendezvous.errors import ShapeMismatchError
from rendezvous.geometry import make_environment
from rendezvous.kinematics import ObserverMemory, observe, points_from_frame
from rendezvous.models import AgentState, Pose
from rendezvous.planner import (GoalDistribution, HppPlanner, PlannerConfig, cem_optimize, plan, rendezvous_reward,
                                rollout, rollout_batch, rollout_score_fn, search)
from rendezvous.predictor import PredictorNet

HIDDEN = (8, 8)


class TestRendezvousReward(unittest.TestCase):
    def test_met(self):
        self.assertEqual(rendezvous_reward([[0.0, 0.0], [0.5, 0.0]], 1.0), 0.0)

    def test_penalty_sums_ordered_pairs(self):
        self.assertAlmostEqual(rendezvous_reward([[0.0, 0.0], [3.0, 0.0]], 1.0), -6.0)
        self.assertAlmostEqual(rendezvous_reward([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]], 1.0), -24.0)

    def test_closer_is_better(self):
        far = rendezvous_reward([[0.0, 0.0], [5.0, 0.0]], 1.0)
        near = rendezvous_reward([[0.0, 0.0], [2.5, 0.0]], 1.0)
        self.assertLess(far, near)

    def test_example_pair(self):
        self.assertAlmostEqual(rendezvous_reward([[0.0, 0.0], [3.0, 4.0]], 1.0), -10.0)

    def test_invariant_to_order_and_translation(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            positions = rng.uniform(-5.0, 5.0, size=(3, 2))
            reward = rendezvous_reward(positions, 1.0)
            self.assertAlmostEqual(rendezvous_reward(positions[rng.permutation(3)], 1.0), reward, places=9)
            self.assertAlmostEqual(rendezvous_reward(positions + rng.uniform(-3.0, 3.0, size=2), 1.0), reward,
                                   places=9)

    def test_needs_two_agents(self):
        with self.assertRaises(ValueError):
            rendezvous_reward([[0.0, 0.0]], 1.0)


class TestCemOptimize(unittest.TestCase):
    def setUp(self):
        self.config = PlannerConfig(N=50, M=10, max_iterations=15)
        self.initial = GoalDistribution(np.zeros(2), np.array([0.5, 0.5]))

    def test_finds_maximum(self):
        target = np.array([0.3, -0.2])
        result = cem_optimize(self.initial, lambda goals: -np.sum((goals - target) ** 2, axis=1), self.config,
                              np.random.default_rng(0))
        self.assertLess(np.hypot(*(result.mean - target)), 0.15)
        self.assertEqual(len(result.elite_rewards), 10)
        self.assertLessEqual(result.iterations, 15)

    def test_shifted_scores_pick_the_same_goal(self):
        target = np.array([0.3, -0.2])

        def score(goals):
            return -np.sum((goals - target) ** 2, axis=1)
        first = cem_optimize(self.initial, score, self.config, np.random.default_rng(2))
        shifted = cem_optimize(self.initial, lambda goals: score(goals) + 7.0, self.config,
                               np.random.default_rng(2))
        np.testing.assert_array_equal(shifted.mean, first.mean)
        self.assertEqual(shifted.iterations, first.iterations)

    def test_ties_keep_lowest_indices(self):
        config = PlannerConfig(N=6, M=2, max_iterations=1)
        rng = np.random.default_rng(4)
        samples = np.zeros(2) + np.array([0.5, 0.5]) * np.random.default_rng(4).standard_normal((6, 2))
        result = cem_optimize(self.initial, lambda goals: np.zeros(len(goals)), config, rng)
        np.testing.assert_allclose(result.mean, samples[:2].mean(axis=0))

    def test_stops_when_converged(self):
        initial = GoalDistribution(np.array([1.0, 2.0]), np.full(2, 0.0005))
        result = cem_optimize(initial, lambda goals: np.zeros(len(goals)), self.config, np.random.default_rng(0))
        self.assertEqual(result.iterations, 0)
        np.testing.assert_array_equal(result.mean, [1.0, 2.0])

    def test_clip(self):
        result = cem_optimize(self.initial, lambda goals: goals[:, 0], self.config, np.random.default_rng(0),
                              clip=lambda goals: np.clip(goals, -1.0, 1.0))
        self.assertLessEqual(result.mean[0], 1.0)
        self.assertGreater(result.mean[0], 0.5)

    def test_invalid_config(self):
        with self.assertRaises(ValueError):
            PlannerConfig(N=3, M=4)
        with self.assertRaises(ValueError):
            GoalDistribution(np.zeros(2), np.zeros(2))


class TestRollout(unittest.TestCase):
    def setUp(self):
        self.world = make_environment('simple')
        self.states = [AgentState(Pose(-2.0, 0.0, 0.0)), AgentState(Pose(2.0, 1.0, math.pi))]
        self.goals = np.zeros((2, 2))
        self.obs = observe(self.states, self.world, self.goals, 0)

    def zero_models(self, variant='delta-pose-lidar'):
        return [PredictorNet.zeros(variant, 'self', HIDDEN), PredictorNet.zeros(variant, 'other:p2p', HIDDEN)]

    def test_zero_delta_model_stands_still(self):
        final = rollout([1.0, 0.0], self.obs, self.zero_models(), 5)
        np.testing.assert_allclose(final, self.obs.poses_array(), atol=1e-12)

    def test_constant_delta_model_drives_straight(self):
        models = self.zero_models()
        for net in models:
            net.target_mean[0] = 0.2
        final = rollout([1.0, 0.0], self.obs, models, 5)
        # Agent 1 sits at (4, 1) facing back toward the observer
        np.testing.assert_allclose(final[:, :2], [[1.0, 0.0], [3.0, 1.0]], atol=1e-9)

    def test_zero_absolute_model_collapses_to_observer(self):
        final = rollout([1.0, 0.0], self.obs, self.zero_models('pose-lidar'), 3)
        np.testing.assert_allclose(final, np.zeros((2, 3)), atol=1e-12)

    def test_steps_and_history(self):
        memory = ObserverMemory(5)
        obs = observe(self.states, self.world, self.goals, 0, memory=memory)
        steps = rollout_batch(np.zeros((4, 2)), obs, self.zero_models(), 3, return_steps=True)
        self.assertEqual(steps.shape, (4, 3, 2, 3))

    def test_model_count_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            rollout([0.0, 0.0], self.obs, self.zero_models()[:1], 2)

        small = PredictorNet.zeros(hidden=HIDDEN, n_rays=10)
        with self.assertRaises(ShapeMismatchError):
            rollout([0.0, 0.0], self.obs, [small, small], 2)


class TestPlan(unittest.TestCase):
    def setUp(self):
        self.world = make_environment('simple')
        self.config = PlannerConfig(N=6, M=2, max_iterations=3)
        self.models = [PredictorNet.zeros('delta-pose-lidar', 'self', HIDDEN),
                       PredictorNet.zeros('delta-pose-lidar', 'other:p2p', HIDDEN)]
        states = [AgentState(Pose(-2.0, 0.0, 0.0)), AgentState(Pose(2.0, 1.0, math.pi))]
        self.obs = observe(states, self.world, np.zeros((2, 2)), 0)

    def test_deterministic(self):
        first = plan(self.obs, self.models, self.config, rng_seed=3)
        second = plan(self.obs, self.models, self.config, rng_seed=3)
        np.testing.assert_array_equal(first, second)
        self.assertEqual(first.shape, (2,))

    def test_initial_spread(self):
        positions = np.array([[0.0, 0.0], [3.0, 4.0]])
        initial = GoalDistribution.around(positions, PlannerConfig())
        np.testing.assert_allclose(initial.mean, [1.5, 2.0])
        np.testing.assert_allclose(initial.std, [2.5, 2.5])

        initial = GoalDistribution.around(positions, PlannerConfig(), self.world.bounds)
        np.testing.assert_allclose(initial.std, [5.0, 5.0])

        initial = GoalDistribution.around(np.array([[0.0, 0.0], [0.2, 0.0]]), PlannerConfig())
        np.testing.assert_allclose(initial.std, [0.5, 0.5])

    def test_finds_a_fixed_meeting_point(self):
        target = np.array([3.0, 3.0])
        layouts = [((0.0, 0.0), (5.0, 0.0)), ((0.0, 0.0), (0.0, 5.0)),
                   ((-2.5, 0.0), (2.5, 0.0)), ((0.0, 0.0), (5.0, 5.0))]
        for first, second in layouts:
            states = [AgentState(Pose(first[0], first[1], 0.7)), AgentState(Pose(second[0], second[1], -1.2))]
            obs = observe(states, self.world, np.zeros((2, 2)), 0)
            reference = obs.world_pose.as_array()

            def score(goals):
                return -np.linalg.norm(points_from_frame(goals, reference) - target, axis=1)
            for seed in range(10):
                goal = plan(obs, self.models, PlannerConfig(), rng_seed=seed, bounds=self.world.bounds,
                            score_fn=score)
                distance = np.linalg.norm(points_from_frame(goal, reference) - target)
                self.assertLess(distance, 0.2, msg=(first, second, seed))

    def test_coincident_agents_return_centroid(self):
        states = [AgentState(Pose(1.0, 1.0, 0.0)), AgentState(Pose(1.0, 1.0, 0.0))]
        obs = observe(states, self.world, np.zeros((2, 2)), 0)
        config = PlannerConfig(N=6, M=2, max_iterations=3, min_std=0.0)
        result = search(obs, self.models, config)
        self.assertEqual(result.iterations, 0)
        np.testing.assert_allclose(result.mean, [0.0, 0.0], atol=1e-12)

    def test_goal_inside_bounds(self):
        states = [AgentState(Pose(9.0, 0.0, 0.0)), AgentState(Pose(9.0, 2.0, 0.0))]
        obs = observe(states, self.world, np.zeros((2, 2)), 0)
        config = PlannerConfig(N=20, M=5, max_iterations=5)
        goal = plan(obs, self.models, config, bounds=self.world.bounds, score_fn=lambda goals: goals[:, 0])
        self.assertLessEqual(goal[0], 1.0 + 1e-9)

    def test_hpp_planner(self):
        planner = HppPlanner(self.models[0], self.models[1:], self.config, rng_seed=2, agent_index=0)
        twin = HppPlanner(self.models[0], self.models[1:], self.config, rng_seed=2, agent_index=0)
        self.assertEqual(planner.replan_period, self.config.T_h)
        np.testing.assert_array_equal(planner.plan(self.obs), twin.plan(self.obs))
        self.assertEqual(planner.last_decision.iterations, 3)
        self.assertEqual(len(planner.last_decision.elite_rewards), 2)

        other = HppPlanner(self.models[0], self.models[1:], self.config, rng_seed=2, agent_index=1)
        self.assertFalse(np.array_equal(planner.plan(self.obs), other.plan(self.obs)))

    def test_accumulated_reward_sums_every_step(self):
        goals = np.array([[0.0, 0.0], [1.0, -1.0]])
        final = rollout_score_fn(self.obs, self.models, PlannerConfig(T=4))(goals)
        accumulated = rollout_score_fn(self.obs, self.models, PlannerConfig(T=4, reward='accumulated'))(goals)
        np.testing.assert_allclose(accumulated, 4 * final)
        self.assertTrue(np.all(final < 0.0))

    def test_warm_start_shifts_the_search(self):
        warm_config = PlannerConfig(N=6, M=2, max_iterations=3, warm_start=True)
        cold = HppPlanner(self.models[0], self.models[1:], self.config, rng_seed=5)
        warm = HppPlanner(self.models[0], self.models[1:], warm_config, rng_seed=5)
        first = warm.plan(self.obs)
        np.testing.assert_array_equal(first, cold.plan(self.obs))

        # Zero models score every goal alike, so only the starting mean differs
        centroid = GoalDistribution.around(self.obs.positions(), self.config).mean
        np.testing.assert_allclose(warm.plan(self.obs) - cold.plan(self.obs), first - centroid, atol=1e-9)
