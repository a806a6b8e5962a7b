import math
import unittest

import numpy as np

from rendezvous.controller import P2PController
from rendezvous.errors import AgentError, SpawnFailedError
from rendezvous.geometry import Rect, World, make_environment
from rendezvous.kinematics import (FixedGoalPlanner, ObserverMemory, from_frame, from_polar, observe, run_episode,
                                   spawn, step_agent, to_frame, to_polar)
from rendezvous.models import MAX_ANGULAR_VEL, MAX_LINEAR_VEL, AgentState, Command, EpisodeConfig, Pose, wrap_angle


class FailingPlanner:
    replan_period = 1

    def plan(self, obs):
        raise RuntimeError('no goal')


class TestFrames(unittest.TestCase):
    def test_to_frame(self):
        relative = to_frame([1.0, 1.0, math.pi / 2], [1.0, 0.0, math.pi / 2])
        np.testing.assert_allclose(relative, [1.0, 0.0, 0.0], atol=1e-12)

    def test_frame_round_trip(self):
        rng = np.random.default_rng(0)
        poses = rng.uniform(-5.0, 5.0, size=(50, 3))
        reference = rng.uniform(-5.0, 5.0, size=(50, 3))
        restored = from_frame(to_frame(poses, reference), reference)
        np.testing.assert_allclose(restored[:, :2], poses[:, :2], atol=1e-9)
        np.testing.assert_allclose(wrap_angle(restored[:, 2] - poses[:, 2]), 0.0, atol=1e-9)

    def test_polar(self):
        np.testing.assert_allclose(to_polar([0.0, 2.0]), [2.0, math.pi / 2])
        np.testing.assert_allclose(from_polar(to_polar([[3.0, -4.0]])), [[3.0, -4.0]], atol=1e-12)

    def test_wrap_angle(self):
        self.assertAlmostEqual(wrap_angle(3 * math.pi / 2), -math.pi / 2)
        self.assertAlmostEqual(wrap_angle(-math.pi), math.pi)


class TestStepAgent(unittest.TestCase):
    def setUp(self):
        self.world = make_environment('simple')

    def test_acceleration_limits(self):
        state = AgentState(Pose(0.0, 0.0, 0.0))
        next_state = step_agent(state, Command(1.0, 3.0), 0.2, self.world)
        self.assertAlmostEqual(next_state.linear_vel, 0.08)
        self.assertAlmostEqual(next_state.angular_vel, 0.296)
        self.assertAlmostEqual(next_state.pose.heading, 0.0592)
        self.assertAlmostEqual(next_state.pose.x, 0.016 * math.cos(0.0592))
        self.assertAlmostEqual(next_state.pose.y, 0.016 * math.sin(0.0592))

    def test_no_reverse(self):
        state = AgentState(Pose(0.0, 0.0, 0.0))
        next_state = step_agent(state, Command(-1.0, 0.0), 0.2, self.world)
        self.assertEqual(next_state.linear_vel, 0.0)
        self.assertEqual(next_state.pose.position.tolist(), [0.0, 0.0])

    def test_collision_reverts_position(self):
        state = AgentState(Pose(9.6, 0.0, 0.0), linear_vel=1.0, angular_vel=0.5)
        next_state = step_agent(state, Command(1.0, 0.5), 0.2, self.world)
        self.assertEqual(next_state.pose.position.tolist(), [9.6, 0.0])
        self.assertAlmostEqual(next_state.pose.heading, 0.1)
        self.assertEqual(next_state.linear_vel, 0.0)
        self.assertEqual(next_state.angular_vel, 0.0)

    def test_invalid_dt(self):
        with self.assertRaises(ValueError):
            step_agent(AgentState(Pose(0.0, 0.0, 0.0)), Command(0.0, 0.0), 0.0, self.world)

    def test_random_commands_respect_limits(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            state = AgentState(Pose(*rng.uniform(-5.0, 5.0, size=2), rng.uniform(-math.pi, math.pi)),
                               rng.uniform(0.0, MAX_LINEAR_VEL), rng.uniform(-MAX_ANGULAR_VEL, MAX_ANGULAR_VEL))
            command = Command(rng.uniform(-2.0, 2.0), rng.uniform(-5.0, 5.0))
            next_state = step_agent(state, command, 0.2, self.world)
            moved = np.linalg.norm(next_state.pose.position - state.pose.position)
            self.assertLessEqual(moved, MAX_LINEAR_VEL * 0.2 + 1e-9)
            self.assertTrue(0.0 <= next_state.linear_vel <= MAX_LINEAR_VEL)
            self.assertTrue(-MAX_ANGULAR_VEL <= next_state.angular_vel <= MAX_ANGULAR_VEL)


class TestSpawn(unittest.TestCase):
    def test_regular_polygon(self):
        world = make_environment('simple')
        for n in (2, 3, 4):
            states = spawn(EpisodeConfig(n_agents=n, rng_seed=3), world)
            positions = np.array([s.pose.position for s in states])
            neighbours = np.hypot(*(positions - np.roll(positions, -1, axis=0)).T)
            np.testing.assert_allclose(neighbours, 5.0, atol=1e-9)
            self.assertTrue(all(s.linear_vel == 0.0 and s.angular_vel == 0.0 for s in states))

    def test_deterministic(self):
        world = make_environment('navigation', 2)
        config = EpisodeConfig(rng_seed=11)
        first = [s.pose for s in spawn(config, world)]
        self.assertEqual(first, [s.pose for s in spawn(config, world)])

    def test_spawn_zones(self):
        world = make_environment('wall')
        states = spawn(EpisodeConfig(rng_seed=5), world, ['p2p', 'other'])
        self.assertTrue(world.spawn_zones[0].contains(states[0].pose.position))
        self.assertEqual([s.policy for s in states], ['p2p', 'other'])

    def test_spawn_failure(self):
        world = World(Rect(0.0, 0.0, 2.0, 2.0))
        with self.assertRaises(SpawnFailedError):
            spawn(EpisodeConfig(spawn_attempts=10), world)


class TestObserve(unittest.TestCase):
    def setUp(self):
        self.world = make_environment('simple')
        self.states = [AgentState(Pose(1.0, 0.0, math.pi / 2)), AgentState(Pose(1.0, 3.0, 0.0))]
        self.goals = np.array([[1.0, 2.0], [0.0, 0.0]])

    def test_observer_frame(self):
        obs = observe(self.states, self.world, self.goals, 0)
        np.testing.assert_allclose(obs.own_pose.as_array(), [0.0, 0.0, 0.0])
        np.testing.assert_allclose(obs.other_poses[0].as_array(), [3.0, 0.0, -math.pi / 2], atol=1e-12)
        np.testing.assert_allclose(obs.goal, [2.0, 0.0], atol=1e-12)
        self.assertEqual(obs.own_pose.frame.observer, 0)
        self.assertEqual(obs.world_pose, self.states[0].pose)

    def test_other_observer_comes_first(self):
        obs = observe(self.states, self.world, self.goals, 1)
        np.testing.assert_allclose(obs.other_poses[0].as_array(), [0.0, -3.0, math.pi / 2], atol=1e-12)
        with self.assertRaises(IndexError):
            observe(self.states, self.world, self.goals, 2)

    def test_history_padding(self):
        memory = ObserverMemory(5)
        obs = observe(self.states, self.world, self.goals, 0, memory=memory)
        self.assertEqual(obs.history.poses.shape, (2, 5, 3))
        self.assertEqual(obs.history.length, 5)
        for k in range(5):
            np.testing.assert_allclose(obs.history.poses[:, k], obs.poses_array(), atol=1e-12)


class TestRunEpisode(unittest.TestCase):
    def setUp(self):
        self.world = make_environment('simple')
        self.states = [AgentState(Pose(-2.5, 0.0, 0.0)), AgentState(Pose(2.5, 0.0, math.pi))]
        self.config = EpisodeConfig(max_steps=100)

    def run_to_origin(self, planning_order=None):
        planners = [FixedGoalPlanner([0.0, 0.0]) for _ in range(2)]
        controllers = [P2PController() for _ in range(2)]
        return run_episode(self.config, self.world, planners, controllers, states=self.states,
                           planning_order=planning_order)

    def test_agents_meet(self):
        trace = self.run_to_origin()
        self.assertTrue(trace.success)
        self.assertEqual(trace.n_steps, trace.rendezvous_step + 1)
        self.assertLess(trace.final_distance(), 2.0)
        self.assertAlmostEqual(trace.distances()[0], 5.0)
        self.assertEqual(trace.poses.shape, (trace.n_steps, 2, 3))

    def test_planning_order_does_not_matter(self):
        first = self.run_to_origin()
        second = self.run_to_origin(planning_order=[1, 0])
        np.testing.assert_array_equal(first.poses, second.poses)

    def test_already_met(self):
        states = [AgentState(Pose(0.0, 0.0, 0.0)), AgentState(Pose(0.5, 0.0, 0.0))]
        trace = run_episode(self.config, self.world, [FixedGoalPlanner([0.0, 0.0])] * 2, [P2PController()] * 2,
                            states=states)
        self.assertTrue(trace.success)
        self.assertEqual(trace.rendezvous_step, 0)
        self.assertEqual(trace.n_steps, 1)

    def test_timeout(self):
        config = EpisodeConfig(max_steps=10)
        planners = [FixedGoalPlanner([-2.5, 0.0]), FixedGoalPlanner([2.5, 0.0])]
        trace = run_episode(config, self.world, planners, [P2PController()] * 2, states=self.states)
        self.assertFalse(trace.success)
        self.assertIsNone(trace.rendezvous_step)
        self.assertEqual(trace.n_steps, 10)

    def test_agent_error(self):
        planners = [FixedGoalPlanner([0.0, 0.0]), FailingPlanner()]
        with self.assertRaises(AgentError) as context:
            run_episode(self.config, self.world, planners, [P2PController()] * 2, states=self.states)
        self.assertEqual(context.exception.agent_index, 1)

    def test_planner_count(self):
        with self.assertRaises(ValueError):
            run_episode(self.config, self.world, [FixedGoalPlanner([0.0, 0.0])], [P2PController()] * 2)

    def test_hold_steps(self):
        states = [AgentState(Pose(0.0, 0.0, 0.0)), AgentState(Pose(0.5, 0.0, 0.0))]
        planners = [FixedGoalPlanner([0.0, 0.0]) for _ in range(2)]
        trace = run_episode(EpisodeConfig(max_steps=10, hold_steps=3), self.world, planners,
                            [P2PController()] * 2, states=states)
        self.assertEqual(trace.rendezvous_step, 2)
        self.assertEqual(trace.n_steps, 3)

        trace = run_episode(EpisodeConfig(max_steps=10, stop_on_rendezvous=False), self.world, planners,
                            [P2PController()] * 2, states=states)
        self.assertFalse(trace.success)
        self.assertEqual(trace.n_steps, 10)
