"""
Decentralized rendezvous planning: cross-entropy search over candidate meeting
points, each scored by rolling the learned motion predictors forward.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ShapeMismatchError
from .geometry import Rect
from .kinematics import from_frame, points_from_frame, points_to_frame, to_frame, to_polar
from .models import DecisionRecord, Observation, wrap_angle
from .predictor import POSE_DIM, PredictorNet

logger = logging.getLogger(__name__)

REWARDS = ('final', 'accumulated')


@dataclass(frozen=True)
class PlannerConfig:
    T: int = 5
    T_h: int = 10
    N: int = 15
    M: int = 5
    max_iterations: int = 15
    epsilon: float = 0.001
    d: float = 1.0
    min_std: float = 0.5
    reward: str = 'final'
    warm_start: bool = False

    def __post_init__(self):
        if not 0 < self.M <= self.N:
            raise ValueError('elite count M must satisfy 0 < M <= N')
        if self.T < 1 or self.T_h < 1:
            raise ValueError('T and T_h must be at least 1')
        if self.epsilon <= 0:
            raise ValueError('epsilon must be positive')
        if self.max_iterations < 0 or self.min_std < 0 or self.d <= 0:
            raise ValueError('max_iterations, min_std and d must be non-negative (d positive)')
        if self.reward not in REWARDS:
            raise ValueError(f'unknown reward: {self.reward}')


@dataclass(frozen=True)
class GoalDistribution:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.std) <= 0):
            raise ValueError('goal distribution std must be positive')

    @classmethod
    def around(cls, positions: np.ndarray, config: PlannerConfig,
               bounds: Optional[Rect] = None) -> 'GoalDistribution':
        """
        Centroid of the agents with the same spread on both axes: half the largest
        pairwise distance, widened to a quarter of the arena when bounds are known.
        """
        positions = np.asarray(positions, dtype=float)
        spread = 0.0
        for j, k in combinations(range(len(positions)), 2):
            spread = max(spread, float(np.linalg.norm(positions[j] - positions[k])) / 2.0)
        if bounds is not None:
            spread = max(spread, max(bounds.width, bounds.height) / 4.0)
        std = np.full(2, max(spread, config.min_std, config.epsilon / 2.0))
        return cls(positions.mean(axis=0), std)


@dataclass
class CemResult:
    mean: np.ndarray
    std: np.ndarray
    iterations: int
    elite_rewards: tuple


def rendezvous_rewards(positions: np.ndarray, d: float) -> np.ndarray:
    # positions (B, n, 2) -> (B,)
    centroid = positions.mean(axis=1, keepdims=True)
    met = np.all(np.linalg.norm(positions - centroid, axis=-1) < d, axis=1)
    offsets = positions[:, :, None, :] - positions[:, None, :, :]
    penalty = -np.linalg.norm(offsets, axis=-1).sum(axis=(1, 2))
    return np.where(met, 0.0, penalty)


def rendezvous_reward(positions, d: float) -> float:
    """
    Zero once every agent is within d of the centroid; otherwise minus the sum
    of distances over all ordered agent pairs.

    :param positions: Planar positions (n, 2), n >= 2
    :param d: Rendezvous distance in meters
    :return: Reward, never positive
    :rtype: float
    :raises ValueError: If fewer than two positions are given
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[0] < 2:
        raise ValueError('rendezvous reward needs at least 2 agents')
    return float(rendezvous_rewards(positions[None, :, :2], d)[0])


def _initial_state(obs: Observation, models: Sequence[PredictorNet]) -> tuple[np.ndarray, np.ndarray]:
    n = obs.n_agents
    if len(models) != n:
        raise ShapeMismatchError(f'expected 1 self model and {n - 1} other models, got {len(models)} models')
    h, n_rays = models[0].history, models[0].n_rays
    for net in models:
        if net.history != h or net.n_rays != n_rays or net.n_rays != obs.scan.ranges.size:
            raise ShapeMismatchError(f'model expects {net.history} x {net.n_rays} windows, observation has '
                                     f'{obs.scan.ranges.size} rays')
    if obs.history is not None:
        if obs.history.length != h:
            raise ShapeMismatchError(f'observation history of {obs.history.length} frames, models expect {h}')
        poses, scans = obs.history.poses, obs.history.scans
    else:
        # Missing history is padded with the current frame
        poses = np.repeat(obs.poses_array()[:, None, :], h, axis=1)
        scans = np.repeat(obs.scan.ranges[None, :], h, axis=0)
    return poses, np.repeat(scans[None], n, axis=0)


def _decode(net: PredictorNet, out: np.ndarray, subject: np.ndarray, observer: np.ndarray,
            last_scan: np.ndarray, max_range: float) -> tuple[np.ndarray, np.ndarray]:
    pose_out, scan_out = out[:, :POSE_DIM], out[:, POSE_DIM:]
    if net.variant == 'delta-pose-lidar':
        pose = from_frame(pose_out, subject)
        scan = last_scan + scan_out
    elif net.variant == 'delta-general-pose-lidar':
        c, s = np.cos(observer[:, 2]), np.sin(observer[:, 2])
        pose = np.stack([subject[:, 0] + c * pose_out[:, 0] - s * pose_out[:, 1],
                         subject[:, 1] + s * pose_out[:, 0] + c * pose_out[:, 1],
                         wrap_angle(subject[:, 2] + pose_out[:, 2])], axis=-1)
        scan = scan_out
    else:
        pose = from_frame(pose_out, observer)
        scan = scan_out
    return pose, np.clip(scan, 0.0, max_range)


def rollout_batch(goals: np.ndarray, obs: Observation, models: Sequence[PredictorNet], T: int,
                  return_steps: bool = False) -> np.ndarray:
    """
    Roll every agent's predictor forward T steps for a batch of shared goals.

    All poses are kept in the observer's frame at planning time; every step each
    model sees its subject's history and its own predicted scans re-expressed in
    the observer's predicted current frame, with the goal converted alongside.

    :param goals: Candidate goals (B, 2) in the observer's frame
    :param obs: The planning agent's observation
    :param models: Self model followed by one model per other agent, in observation order
    :param T: Number of predicted steps
    :param return_steps: Return every step's poses (B, T, n, 3) instead of the last (B, n, 3)
    :return: Predicted poses in the observer's frame
    :rtype: np.ndarray
    :raises ShapeMismatchError: If the models do not match the observation
    """
    goals = np.atleast_2d(np.asarray(goals, dtype=float))
    poses, scans = _initial_state(obs, models)
    batch = len(goals)
    poses = np.repeat(poses[None], batch, axis=0)
    scans = np.repeat(scans[None], batch, axis=0)
    max_range = obs.scan.max_range
    n = obs.n_agents

    steps = []
    for _ in range(T):
        observer = poses[:, 0, -1]
        goal_polar = to_polar(points_to_frame(goals, observer))
        next_poses, next_scans = [], []
        for a, net in enumerate(models):
            window_poses = to_frame(poses[:, a], observer[:, None, :])
            x = np.concatenate([window_poses.reshape(batch, -1), scans[:, a].reshape(batch, -1), goal_polar],
                               axis=1)
            pose, scan = _decode(net, net.forward_batch(x), poses[:, a, -1], observer, scans[:, a, -1], max_range)
            next_poses.append(pose)
            next_scans.append(scan)
        poses = np.concatenate([poses[:, :, 1:], np.stack(next_poses, axis=1)[:, :, None]], axis=2)
        scans = np.concatenate([scans[:, :, 1:], np.stack(next_scans, axis=1)[:, :, None]], axis=2)
        if return_steps:
            steps.append(poses[:, :, -1])
    if return_steps:
        return np.stack(steps, axis=1) if steps else np.empty((batch, 0, n, POSE_DIM))
    return poses[:, :, -1]


def rollout(goal, obs: Observation, models: Sequence[PredictorNet], T: int) -> np.ndarray:
    """
    Final predicted poses (n, 3) of all agents, observer first, in the observer's frame.
    """
    return rollout_batch(np.asarray(goal, dtype=float)[None, :], obs, models, T)[0]


def rollout_score_fn(obs: Observation, models: Sequence[PredictorNet], config: PlannerConfig) -> Callable:
    def score(goals: np.ndarray) -> np.ndarray:
        if config.reward == 'accumulated':
            steps = rollout_batch(goals, obs, models, config.T, return_steps=True)
            return sum(rendezvous_rewards(steps[:, k, :, :2], config.d) for k in range(config.T))
        return rendezvous_rewards(rollout_batch(goals, obs, models, config.T)[:, :, :2], config.d)
    return score


def cem_optimize(initial: GoalDistribution, score_fn: Callable[[np.ndarray], np.ndarray], config: PlannerConfig,
                 rng: np.random.Generator, clip: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> CemResult:
    """
    Cross-entropy search over planar goals.

    Samples N goals per iteration, keeps the M best (ties go to the lower sample
    index) and refits a diagonal Gaussian; stops after max_iterations or once
    every std component is at most epsilon.

    :param initial: Starting distribution
    :param score_fn: Goals (N, 2) -> rewards (N,)
    :param config: CEM settings
    :param rng: Random generator owned by the caller
    :param clip: Optional projection applied to every sample
    :return: Final mean and std, iteration count and last elite rewards
    :rtype: CemResult
    """
    mean = np.array(initial.mean, dtype=float)
    std = np.array(initial.std, dtype=float)
    iterations = 0
    elite_rewards = ()
    while iterations < config.max_iterations and np.any(std > config.epsilon):
        samples = mean + std * rng.standard_normal((config.N, 2))
        if clip is not None:
            samples = clip(samples)
        rewards = np.asarray(score_fn(samples), dtype=float)
        elite = np.argsort(-rewards, kind='stable')[:config.M]
        mean = samples[elite].mean(axis=0)
        std = samples[elite].std(axis=0, ddof=1) if config.M > 1 else np.zeros(2)
        std = np.maximum(std, config.epsilon / 2.0)
        elite_rewards = tuple(float(r) for r in rewards[elite])
        iterations += 1
    return CemResult(mean, std, iterations, elite_rewards)


def bounds_clip(obs: Observation, bounds: Optional[Rect]) -> Optional[Callable]:
    """
    Projection of observer-frame goals onto the world bounds.
    """
    if bounds is None:
        return None
    reference = obs.world_pose.as_array()

    def clip(goals: np.ndarray) -> np.ndarray:
        world = points_from_frame(goals, reference)
        world = np.clip(world, [bounds.x0, bounds.y0], [bounds.x1, bounds.y1])
        return points_to_frame(world, reference)
    return clip


def search(obs: Observation, models: Sequence[PredictorNet], config: PlannerConfig, rng_seed: int = 0,
           bounds: Optional[Rect] = None, score_fn: Optional[Callable] = None,
           rng: Optional[np.random.Generator] = None, initial: Optional[GoalDistribution] = None) -> CemResult:
    """
    Choose a rendezvous goal from one agent's observation only.

    :param obs: The planning agent's observation
    :param models: Self model followed by one model per other agent
    :param config: Planner settings
    :param rng_seed: Seed used when no generator is passed
    :param bounds: World bounds goals are clipped to
    :param score_fn: Replacement for rollout scoring
    :param rng: Generator to draw from
    :param initial: Starting distribution; built around the observed agents otherwise
    :return: CEM result whose mean is the goal in the observer's frame
    :rtype: CemResult
    """
    rng = rng if rng is not None else np.random.default_rng(rng_seed)
    initial = initial or GoalDistribution.around(obs.positions(), config, bounds)
    score_fn = score_fn or rollout_score_fn(obs, models, config)
    return cem_optimize(initial, score_fn, config, rng, bounds_clip(obs, bounds))


def plan(obs: Observation, models: Sequence[PredictorNet], config: PlannerConfig, rng_seed: int = 0,
         bounds: Optional[Rect] = None, score_fn: Optional[Callable] = None) -> np.ndarray:
    """
    Rendezvous goal in the observer's frame; deterministic in rng_seed.
    """
    return search(obs, models, config, rng_seed, bounds, score_fn).mean


class HppPlanner:
    """
    One agent's high-level planner; holds only that agent's models and generator.
    """

    def __init__(self, self_model: PredictorNet, other_models: Sequence[PredictorNet],
                 config: Optional[PlannerConfig] = None, rng_seed: int = 0, agent_index: int = 0,
                 bounds: Optional[Rect] = None):
        self.models = [self_model] + list(other_models)
        self.config = config or PlannerConfig()
        self.replan_period = self.config.T_h
        self.rng = np.random.default_rng(np.random.SeedSequence([rng_seed, agent_index]))
        self.bounds = bounds
        self.last_decision: Optional[DecisionRecord] = None
        self._previous_goal: Optional[np.ndarray] = None

    def plan(self, obs: Observation) -> np.ndarray:
        initial = GoalDistribution.around(obs.positions(), self.config, self.bounds)
        if self.config.warm_start and self._previous_goal is not None:
            mean = points_to_frame(self._previous_goal, obs.world_pose.as_array())
            initial = GoalDistribution(mean, initial.std)
        result = search(obs, self.models, self.config, bounds=self.bounds, rng=self.rng, initial=initial)
        self._previous_goal = points_from_frame(result.mean, obs.world_pose.as_array())
        self.last_decision = DecisionRecord(obs.timestamp, obs.observer, result.iterations, result.std,
                                            result.elite_rewards)
        logger.debug('agent %d step %d: %d iterations, std %s', obs.observer, obs.timestamp, result.iterations,
                     result.std)
        return result.mean
