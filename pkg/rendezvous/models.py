from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .geometry import DEFAULT_MAX_RANGE, LidarScan

MAX_LINEAR_VEL = 1.0
MAX_ANGULAR_VEL = 3.0
LINEAR_ACCEL = 0.4
ANGULAR_ACCEL = 1.48

# 100 low-level steps span 20 s
DT = 0.2
HISTORY_LENGTH = 5
AGENT_RADIUS = 0.3

TRACE_COLUMNS = ['step', 'agent', 'x', 'y', 'heading', 'goal_x', 'goal_y', 'pairwise_min_dist', 'centroid_dist']
DECISION_COLUMNS = ['plan_iterations', 'plan_std', 'elite_rewards']


def wrap_angle(angle):
    """
    Normalize angles to (-pi, pi]; works on scalars and arrays.
    """
    wrapped = math.pi - np.mod(math.pi - np.asarray(angle, dtype=float), 2.0 * math.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


@dataclass(frozen=True)
class Frame:
    kind: str = 'world'
    observer: Optional[int] = None
    timestamp: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ('world', 'agent'):
            raise ValueError(f'unknown frame kind: {self.kind}')


WORLD_FRAME = Frame()


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float
    frame: Frame = WORLD_FRAME

    def __post_init__(self):
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'y', float(self.y))
        object.__setattr__(self, 'heading', wrap_angle(self.heading))

    @classmethod
    def from_array(cls, values, frame: Frame = WORLD_FRAME) -> 'Pose':
        return cls(values[0], values[1], values[2], frame)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading])


@dataclass(frozen=True)
class AgentState:
    pose: Pose
    linear_vel: float = 0.0
    angular_vel: float = 0.0
    radius: float = AGENT_RADIUS
    policy: str = 'p2p'

    def __post_init__(self):
        if not 0.0 <= self.linear_vel <= MAX_LINEAR_VEL:
            raise ValueError(f'linear velocity out of range: {self.linear_vel}')
        if not -MAX_ANGULAR_VEL <= self.angular_vel <= MAX_ANGULAR_VEL:
            raise ValueError(f'angular velocity out of range: {self.angular_vel}')


@dataclass(frozen=True)
class Command:
    v: float
    theta: float


@dataclass(frozen=True)
class ObservationHistory:
    """
    The last h frames seen by one observer, oldest first.

    poses has shape (n, h, 3) with the observer at index 0, every pose expressed
    in the observer's current frame; scans has shape (h, n_rays).
    """
    poses: np.ndarray
    scans: np.ndarray

    @property
    def length(self) -> int:
        return self.scans.shape[0]


@dataclass(frozen=True)
class Observation:
    own_pose: Pose
    other_poses: tuple
    scan: LidarScan
    goal: np.ndarray
    world_pose: Pose
    observer: int = 0
    timestamp: int = 0
    history: Optional[ObservationHistory] = None

    @property
    def n_agents(self) -> int:
        return len(self.other_poses) + 1

    def poses_array(self) -> np.ndarray:
        """
        Observed poses of all agents as an (n, 3) array, observer first.
        """
        return np.array([self.own_pose.as_array()] + [pose.as_array() for pose in self.other_poses])

    def positions(self) -> np.ndarray:
        return self.poses_array()[:, :2]

    def with_goal(self, goal_polar) -> 'Observation':
        return Observation(self.own_pose, self.other_poses, self.scan, np.asarray(goal_polar, dtype=float),
                           self.world_pose, self.observer, self.timestamp, self.history)


@dataclass(frozen=True)
class EpisodeConfig:
    n_agents: int = 2
    dt: float = DT
    max_steps: int = 100
    initial_separation: float = 5.0
    rendezvous_d: float = 1.0
    rng_seed: int = 0
    hold_steps: int = 1
    stop_on_rendezvous: bool = True
    agent_radius: float = AGENT_RADIUS
    pose_noise_std: float = 0.0
    lidar_max_range: float = DEFAULT_MAX_RANGE
    lidar_noise_std: float = 0.0
    history_length: int = HISTORY_LENGTH
    spawn_attempts: int = 1000

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError('an episode needs at least 2 agents')
        if self.dt <= 0 or self.max_steps <= 0:
            raise ValueError('dt and max_steps must be positive')
        if self.hold_steps < 1:
            raise ValueError('hold_steps must be at least 1')


@dataclass
class DecisionRecord:
    step: int
    agent: int
    iterations: int
    std: np.ndarray
    elite_rewards: tuple


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    """
    Distances for every unordered agent pair, in combinations order.
    """
    return np.array([np.hypot(*(positions[j] - positions[k])) for j, k in combinations(range(len(positions)), 2)])


def inter_agent_distance(positions: np.ndarray) -> float:
    """
    Mean pairwise distance; the plain distance for two agents.
    """
    return float(pairwise_distances(positions).mean())


def within_rendezvous(positions: np.ndarray, d: float) -> bool:
    centroid = positions.mean(axis=0)
    return bool(np.all(np.hypot(*(positions - centroid).T) < d))


@dataclass
class EpisodeTrace:
    """
    World-frame record of one episode, one frame per low-level step.
    """
    poses: np.ndarray
    goals: np.ndarray
    config: EpisodeConfig
    success: bool = False
    rendezvous_step: Optional[int] = None
    scans: Optional[np.ndarray] = None
    policies: tuple = ()
    decisions: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return self.poses.shape[0]

    def distances(self) -> np.ndarray:
        """
        Inter-agent distance at every recorded step.
        """
        return np.array([inter_agent_distance(frame[:, :2]) for frame in self.poses])

    def final_distance(self) -> float:
        return float(self.distances()[-1])

    def rows(self, with_decisions: bool = False) -> list[list[str]]:
        decisions = {(record.step, record.agent): record for record in self.decisions}
        rows = []
        for step, frame in enumerate(self.poses):
            positions = frame[:, :2]
            centroid = positions.mean(axis=0)
            for agent, (x, y, heading) in enumerate(frame):
                others = np.delete(positions, agent, axis=0)
                min_dist = np.hypot(*(others - positions[agent]).T).min()
                centroid_dist = np.hypot(*(positions[agent] - centroid))
                goal_x, goal_y = self.goals[step, agent]
                row = [str(step), str(agent)] + [f'{value:.6f}' for value in
                                                 (x, y, heading, goal_x, goal_y, min_dist, centroid_dist)]
                if with_decisions:
                    record = decisions.get((step, agent))
                    if record is None:
                        row += ['', '', '']
                    else:
                        row += [str(record.iterations), f'{float(np.max(record.std)):.6f}',
                                '|'.join(f'{r:.6f}' for r in record.elite_rewards)]
                rows.append(row)
        return rows

    def write_csv(self, path, with_decisions: bool = False) -> None:
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(TRACE_COLUMNS + (DECISION_COLUMNS if with_decisions else []))
            writer.writerows(self.rows(with_decisions))
