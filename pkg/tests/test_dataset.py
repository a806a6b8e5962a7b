import math
import os
import tempfile
import unittest

import numpy as np

from rendezvous.dataset import TrajectoryDataset, collect_dataset, load_dataset, save_dataset
from rendezvous.errors import ShapeMismatchError
from rendezvous.models import Command, EpisodeConfig

N_RAYS = 4
HISTORY = 2
STEPS = 6


class ParkedController:
    def act(self, obs):
        return Command(0.0, 0.0)


def straight_line_dataset(n_trajectories=2):
    """
    Agent 0 sits at the origin facing +y; agent 1 drives along +x at 0.1 m per step.
    """
    poses = np.zeros((n_trajectories, STEPS, 2, 3))
    poses[:, :, 0, 2] = math.pi / 2
    poses[:, :, 1, 0] = 0.1 * np.arange(STEPS)
    poses[:, :, 1, 1] = 2.0
    scans = np.broadcast_to(np.arange(STEPS, dtype=np.float32)[None, :, None, None],
                            (n_trajectories, STEPS, 2, N_RAYS)).copy()
    goals = np.tile([[0.0, 3.0]], (n_trajectories, 1))
    policies = np.array([['p2p', 'cautious']] * n_trajectories)
    return TrajectoryDataset(poses, scans, goals, policies, history=HISTORY)


class TestExamples(unittest.TestCase):
    def setUp(self):
        self.data = straight_line_dataset()

    def test_window_counts(self):
        self.assertEqual(self.data.windows_per_trajectory, STEPS - HISTORY)
        self.assertEqual(len(self.data.examples('self')), 2 * 2 * (STEPS - HISTORY))
        self.assertEqual(len(self.data.examples('other')), 2 * 2 * (STEPS - HISTORY))
        self.assertEqual(len(self.data.examples('other:cautious')), 2 * (STEPS - HISTORY))
        self.assertEqual(self.data.policy_ids(), ['cautious', 'p2p'])
        self.assertEqual(len(self.data.examples('other').for_policy('p2p')), 2 * (STEPS - HISTORY))

    def test_batch_shapes(self):
        x, y = self.data.examples('self').batch(np.arange(5))
        self.assertEqual(x.shape, (5, HISTORY * (3 + N_RAYS) + 2))
        self.assertEqual(y.shape, (5, 3 + N_RAYS))

    def test_delta_pose_targets(self):
        examples = self.data.examples('other:cautious', 'delta-pose-lidar')
        example = examples.example(0)
        np.testing.assert_allclose(example.target_pose_delta, [0.1, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(example.target_scan_delta, np.ones(N_RAYS))

    def test_delta_general_targets(self):
        example = self.data.examples('other:cautious', 'delta-general-pose-lidar').example(0)
        np.testing.assert_allclose(example.target_pose_delta, [0.0, -0.1, 0.0], atol=1e-12)
        np.testing.assert_allclose(example.target_scan_delta, np.full(N_RAYS, 2.0))

    def test_absolute_targets(self):
        example = self.data.examples('other:cautious', 'pose-lidar').example(0)
        # Subject moves from (0.1, 2) to (0.2, 2); observer faces +y from the origin
        np.testing.assert_allclose(example.target_pose_delta, [2.0, -0.2, -math.pi / 2], atol=1e-12)
        np.testing.assert_allclose(example.target_scan_delta, np.full(N_RAYS, 2.0))

    def test_inputs_in_observer_frame(self):
        example = self.data.examples('other:cautious').example(0)
        window = example.input
        np.testing.assert_allclose(window.poses, [[2.0, 0.0, -math.pi / 2], [2.0, -0.1, -math.pi / 2]], atol=1e-12)
        np.testing.assert_allclose(window.scans, [np.zeros(N_RAYS), np.ones(N_RAYS)])
        np.testing.assert_allclose(window.goal, [3.0, 0.0], atol=1e-12)

    def test_split_by_trajectory(self):
        training, held_out = self.data.examples('self').split(0.5, rng_seed=1)
        self.assertEqual(len(training) + len(held_out), len(self.data.examples('self')))
        self.assertFalse(set(training.index[:, 0]) & set(held_out.index[:, 0]))
        training, held_out = self.data.examples('self').split(0.0)
        self.assertEqual(len(held_out), 0)

        with self.assertRaises(ValueError):
            self.data.examples('self').split(1.0)

    def test_invalid_inputs(self):
        with self.assertRaises(ValueError):
            self.data.examples('self', 'pose-only')
        with self.assertRaises(ShapeMismatchError):
            TrajectoryDataset(np.zeros((2, STEPS, 2, 2)), self.data.scans, self.data.goals, self.data.policies)


class TestDatasetFile(unittest.TestCase):
    def setUp(self):
        self.tmp_dir = tempfile.TemporaryDirectory()
        self.data = straight_line_dataset()

    def tearDown(self):
        self.tmp_dir.cleanup()

    def test_save_and_load(self):
        path = os.path.join(self.tmp_dir.name, 'dataset.npz')
        save_dataset(self.data, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.world_poses, self.data.world_poses)
        np.testing.assert_array_equal(loaded.scans, self.data.scans)
        self.assertEqual(loaded.policies.tolist(), self.data.policies.tolist())
        self.assertEqual(loaded.history, HISTORY)

    def test_identical_bytes(self):
        paths = [os.path.join(self.tmp_dir.name, f'dataset_{k}.npz') for k in range(2)]
        for path in paths:
            save_dataset(self.data, path)
        with open(paths[0], 'rb') as first, open(paths[1], 'rb') as second:
            self.assertEqual(first.read(), second.read())


class TestCollectDataset(unittest.TestCase):
    def setUp(self):
        self.episode = EpisodeConfig(max_steps=8)

    def test_collect(self):
        d_self, d_other = collect_dataset(n_trajectories=2, rng_seed=3, episode=self.episode)
        data = d_self.trajectories
        self.assertIs(d_other.trajectories, data)
        self.assertEqual(data.n_trajectories + data.skipped, 2)
        self.assertEqual(data.n_steps, 8)
        self.assertEqual(data.scans.dtype, np.float32)
        self.assertEqual(len(d_self), data.n_trajectories * 2 * (8 - self.episode.history_length))
        self.assertEqual(data.policy_ids(), ['p2p'])

    def test_reproducible(self):
        first = collect_dataset(n_trajectories=2, rng_seed=3, episode=self.episode)[0].trajectories
        second = collect_dataset(n_trajectories=2, rng_seed=3, episode=self.episode)[0].trajectories
        np.testing.assert_array_equal(first.world_poses, second.world_poses)
        np.testing.assert_array_equal(first.goals, second.goals)

    def test_no_trajectories(self):
        with self.assertRaises(ValueError):
            collect_dataset(n_trajectories=0)

    def test_parked_agents_give_zero_motion_targets(self):
        d_self, d_other = collect_dataset(controllers={'p2p': ParkedController()}, n_trajectories=2, rng_seed=3,
                                          episode=self.episode)
        for examples in (d_self, d_other):
            _, y = examples.batch(np.arange(len(examples)))
            np.testing.assert_allclose(y[:, :3], 0.0, atol=1e-12)
            np.testing.assert_allclose(y[:, 3:], 0.0, atol=1e-5)
