"""
Self-supervised dataset collection for the motion predictors.

Trajectories are stored raw (world poses, observer scans, shared goal, policy ids);
training examples for any parameterization variant are materialized on demand.
"""
from __future__ import annotations

import json
import logging
import zipfile
from dataclasses import dataclass, replace
from functools import partial
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .controller import P2PController
from .errors import ShapeMismatchError, SpawnFailedError
from .geometry import WORLD_HALF_EXTENT, World, make_environment
from .kinematics import FixedGoalPlanner, points_to_frame, run_episode, spawn, to_frame, to_polar
from .models import HISTORY_LENGTH, EpisodeConfig, wrap_angle
from .predictor import POSE_DIM, VARIANTS, HistoryWindow, TrainingExample

logger = logging.getLogger(__name__)

DATASET_VERSION = 1
# Fixed member timestamps keep archives byte-identical across runs
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass
class TrajectoryDataset:
    """
    K recorded episodes of n agents over L steps.

    world_poses has shape (K, L, n, 3); scans (K, L, n, n_rays) holds every
    agent's own scan; goals (K, 2) is the shared world-frame goal; policies
    (K, n) the policy id of every agent.
    """
    world_poses: np.ndarray
    scans: np.ndarray
    goals: np.ndarray
    policies: np.ndarray
    history: int = HISTORY_LENGTH
    max_range: float = 10.0
    skipped: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.world_poses.ndim != 4 or self.world_poses.shape[-1] != POSE_DIM:
            raise ShapeMismatchError('world_poses must have shape (K, L, n, 3)')
        if self.scans.shape[:3] != self.world_poses.shape[:3]:
            raise ShapeMismatchError('scans must align with world_poses')
        if self.goals.shape != (self.n_trajectories, 2) or self.policies.shape != (self.n_trajectories, self.n_agents):
            raise ShapeMismatchError('goals and policies must hold one row per trajectory')

    @property
    def n_trajectories(self) -> int:
        return self.world_poses.shape[0]

    @property
    def n_steps(self) -> int:
        return self.world_poses.shape[1]

    @property
    def n_agents(self) -> int:
        return self.world_poses.shape[2]

    @property
    def n_rays(self) -> int:
        return self.scans.shape[3]

    @property
    def windows_per_trajectory(self) -> int:
        return max(0, self.n_steps - self.history)

    def policy_ids(self) -> list[str]:
        return sorted(set(self.policies.ravel().tolist()))

    def examples(self, role: str = 'self', variant: str = 'delta-pose-lidar',
                 trajectories: Optional[np.ndarray] = None) -> 'ExampleSet':
        """
        Index every window for a role: 'self', 'other' (any other agent) or 'other:<policy>'.
        """
        if variant not in VARIANTS:
            raise ValueError(f'unknown predictor variant: {variant}')
        ks = np.arange(self.n_trajectories) if trajectories is None else np.asarray(trajectories)
        ts = np.arange(self.history - 1, self.n_steps - 1)
        rows = []
        for k in ks:
            for i in range(self.n_agents):
                for j in range(self.n_agents):
                    if role == 'self':
                        if i != j:
                            continue
                    elif i == j:
                        continue
                    elif role.startswith('other:') and self.policies[k, j] != role[len('other:'):]:
                        continue
                    block = np.empty((len(ts), 4), dtype=np.int64)
                    block[:, 0], block[:, 1], block[:, 2], block[:, 3] = k, i, j, ts
                    rows.append(block)
        index = np.concatenate(rows) if rows else np.empty((0, 4), dtype=np.int64)
        return ExampleSet(self, role, variant, index)


class ExampleSet:
    """
    Training windows over a TrajectoryDataset; rows of index are (trajectory, observer, subject, t).

    Inputs hold the subject's last h poses and the observer's last h scans, all
    in the observer's frame at t, plus the polar goal. Targets follow the variant.
    """

    def __init__(self, trajectories: TrajectoryDataset, role: str, variant: str, index: np.ndarray):
        self.trajectories = trajectories
        self.role = role
        self.variant = variant
        self.index = index

    def __len__(self) -> int:
        return len(self.index)

    def for_policy(self, policy: str) -> 'ExampleSet':
        if self.role == 'self':
            raise ValueError('self examples are not split by policy')
        k, j = self.index[:, 0], self.index[:, 2]
        keep = self.trajectories.policies[k, j] == policy
        return ExampleSet(self.trajectories, f'other:{policy}', self.variant, self.index[keep])

    def split(self, held_out_fraction: float, rng_seed: int = 0) -> tuple['ExampleSet', 'ExampleSet']:
        """
        Split by trajectory so no episode contributes to both halves.
        """
        ks = np.unique(self.index[:, 0])
        if not 0.0 <= held_out_fraction < 1.0:
            raise ValueError('held_out_fraction must lie in [0, 1)')
        n_held = int(np.ceil(held_out_fraction * len(ks))) if held_out_fraction > 0 else 0
        n_held = min(n_held, len(ks) - 1)
        held = np.random.default_rng(rng_seed).permutation(ks)[:n_held]
        mask = np.isin(self.index[:, 0], held)
        return (ExampleSet(self.trajectories, self.role, self.variant, self.index[~mask]),
                ExampleSet(self.trajectories, self.role, self.variant, self.index[mask]))

    def _arrays(self, indices) -> tuple:
        data = self.trajectories
        rows = self.index[np.asarray(indices)]
        k, i, j, t = rows.T
        frames = t[:, None] + np.arange(-data.history + 1, 1)[None, :]
        observer_now = data.world_poses[k, t, i]
        poses = to_frame(data.world_poses[k[:, None], frames, j[:, None]], observer_now[:, None, :])
        scans = data.scans[k[:, None], frames, i[:, None]].astype(float)
        goal = to_polar(points_to_frame(data.goals[k], observer_now))

        subject_now = data.world_poses[k, t, j]
        subject_next = data.world_poses[k, t + 1, j]
        scan_next = data.scans[k, t + 1, i].astype(float)
        if self.variant == 'delta-pose-lidar':
            pose_target = to_frame(subject_next, subject_now)
            scan_target = scan_next - scans[:, -1]
        elif self.variant == 'delta-general-pose-lidar':
            displacement = subject_next[:, :2] - subject_now[:, :2]
            c, s = np.cos(observer_now[:, 2]), np.sin(observer_now[:, 2])
            pose_target = np.stack([c * displacement[:, 0] + s * displacement[:, 1],
                                    -s * displacement[:, 0] + c * displacement[:, 1],
                                    wrap_angle(subject_next[:, 2] - subject_now[:, 2])], axis=-1)
            scan_target = scan_next
        else:
            pose_target = to_frame(subject_next, observer_now)
            scan_target = scan_next
        return poses, scans, goal, pose_target, scan_target

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """
        Flattened inputs (B, h*(3+R)+2) and targets (B, 3+R).
        """
        poses, scans, goal, pose_target, scan_target = self._arrays(indices)
        count = len(poses)
        x = np.concatenate([poses.reshape(count, -1), scans.reshape(count, -1), goal], axis=1)
        return x, np.concatenate([pose_target, scan_target], axis=1)

    def example(self, position: int) -> TrainingExample:
        poses, scans, goal, pose_target, scan_target = self._arrays([position])
        return TrainingExample(HistoryWindow(poses[0], scans[0], goal[0]), pose_target[0], scan_target[0])


def collect_dataset(world_factory: Optional[Callable[[int], World]] = None,
                    controllers: Optional[Mapping[str, object]] = None, n_trajectories: int = 2000,
                    rng_seed: int = 0, episode: Optional[EpisodeConfig] = None,
                    policies: Optional[Sequence[str]] = None) -> tuple[ExampleSet, ExampleSet]:
    """
    Run agents toward a shared random goal in fresh worlds and record every step.

    :param world_factory: Seed -> World; a training_random world by default
    :param controllers: Policy id -> controller; a default P2P controller per policy otherwise
    :param n_trajectories: Number of episodes to attempt
    :param rng_seed: Seed for worlds, goals and spawns
    :param episode: Episode settings (length, lidar, team size)
    :param policies: Policy id per agent; all 'p2p' by default
    :return: D_self and D_other example sets backed by the same trajectories
    :rtype: tuple[ExampleSet, ExampleSet]
    :raises ValueError: If n_trajectories is not positive or every spawn failed
    """
    if n_trajectories <= 0:
        raise ValueError('n_trajectories must be positive')
    world_factory = world_factory or partial(make_environment, 'training_random')
    episode = episode or EpisodeConfig()
    policies = list(policies) if policies is not None else ['p2p'] * episode.n_agents
    if len(policies) != episode.n_agents:
        raise ValueError('one policy id is needed per agent')
    controllers = dict(controllers or {})
    for policy in policies:
        controllers.setdefault(policy, P2PController())

    rng = np.random.default_rng(rng_seed)
    world_poses, scans, goals = [], [], []
    skipped = 0
    for k in range(n_trajectories):
        seed = int(rng.integers(0, 2 ** 31 - 1))
        goal = rng.uniform(-WORLD_HALF_EXTENT, WORLD_HALF_EXTENT, size=2)
        world = world_factory(seed)
        config = replace(episode, rng_seed=seed, stop_on_rendezvous=False)
        try:
            states = spawn(config, world, policies)
        except SpawnFailedError as e:
            skipped += 1
            logger.warning('trajectory %d skipped: %s', k, e)
            continue
        trace = run_episode(config, world, [FixedGoalPlanner(goal) for _ in policies],
                            [controllers[p] for p in policies], states=states, record_scans=True)
        world_poses.append(trace.poses)
        scans.append(trace.scans.astype(np.float32))
        goals.append(goal)
    if not world_poses:
        raise ValueError(f'all {n_trajectories} trajectories failed to spawn')
    logger.info('collected %d trajectories (%d skipped)', len(world_poses), skipped)

    data = TrajectoryDataset(np.array(world_poses), np.array(scans), np.array(goals),
                             np.array([policies] * len(world_poses)), episode.history_length,
                             episode.lidar_max_range, skipped, rng_seed)
    return data.examples('self'), data.examples('other')


def save_dataset(data: TrajectoryDataset, path) -> None:
    """
    Write a dataset as an npz archive; identical data gives identical bytes.
    """
    header = {
        'version': DATASET_VERSION,
        'history': data.history,
        'n_rays': data.n_rays,
        'variants': list(VARIANTS),
        'max_range': data.max_range,
        'skipped': data.skipped,
        'rng_seed': data.rng_seed,
    }
    arrays = {
        'header': np.array(json.dumps(header, sort_keys=True)),
        'world_poses': data.world_poses,
        'scans': data.scans,
        'goals': data.goals,
        'policies': data.policies.astype(str),
    }
    with zipfile.ZipFile(path, 'w', compression=zipfile.ZIP_DEFLATED) as archive:
        for name, array in arrays.items():
            info = zipfile.ZipInfo(f'{name}.npy', date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            with archive.open(info, 'w', force_zip64=True) as f:
                np.lib.format.write_array(f, np.asanyarray(array), allow_pickle=False)


def load_dataset(path) -> TrajectoryDataset:
    """
    :raises ShapeMismatchError: On an unsupported version or inconsistent arrays
    """
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive['header'][()]))
        if header.get('version') != DATASET_VERSION:
            raise ShapeMismatchError(f"unsupported dataset version: {header.get('version')}")
        data = TrajectoryDataset(archive['world_poses'], archive['scans'], archive['goals'], archive['policies'],
                                 int(header['history']), float(header['max_range']), int(header['skipped']),
                                 int(header['rng_seed']))
    if data.n_rays != header['n_rays']:
        raise ShapeMismatchError(f"dataset header promises {header['n_rays']} rays, arrays hold {data.n_rays}")
    return data

