"""
Comparison planners: centralized goal heuristics, RRT path following and RRT+CEM.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import ControllerParams, act
from .geometry import WORLD_HALF_EXTENT, Rect, World, collides_many
from .kinematics import from_polar, points_from_frame, points_to_frame, to_polar
from .models import AGENT_RADIUS, DT, MAX_LINEAR_VEL, Command, DecisionRecord, Observation
from .planner import GoalDistribution, PlannerConfig, bounds_clip, cem_optimize, rendezvous_rewards

logger = logging.getLogger(__name__)

PLANNER_KINDS = ('hpp', 'centralized_mp', 'centralized_oa', 'centralized_rp', 'rrt_mp', 'rrt_oa', 'rrt_cem')
CENTRALIZED_KINDS = ('MP', 'OA', 'RP')
WAYPOINT_TOLERANCE = 0.3


def _default_bounds() -> Rect:
    return Rect(-WORLD_HALF_EXTENT, -WORLD_HALF_EXTENT, WORLD_HALF_EXTENT, WORLD_HALF_EXTENT)


def centralized_goal(kind: str, obs: Observation, rng_seed: int = 0, bounds: Optional[Rect] = None) -> np.ndarray:
    """
    Goal heuristics that assume every agent shares the same goal rule.

    :param kind: MP (midpoint of all agents), OA (the other agent, or the centroid of the
        others for larger teams) or RP (a random point fixed by the shared episode seed)
    :param obs: The planning agent's observation
    :param rng_seed: Episode seed shared by every agent (RP only)
    :param bounds: World bounds the RP point is drawn from
    :return: Goal in the observer's frame
    :rtype: np.ndarray
    """
    positions = obs.positions()
    if kind == 'MP':
        return positions.mean(axis=0)
    if kind == 'OA':
        return positions[1:].mean(axis=0)
    if kind == 'RP':
        bounds = bounds or _default_bounds()
        rng = np.random.default_rng(rng_seed)
        point = np.array([rng.uniform(bounds.x0, bounds.x1), rng.uniform(bounds.y0, bounds.y1)])
        return points_to_frame(point, obs.world_pose.as_array())
    raise ValueError(f'unknown centralized goal kind: {kind}')


class CentralizedPlanner:
    def __init__(self, kind: str, episode_seed: int = 0, bounds: Optional[Rect] = None, replan_period: int = 1):
        if kind not in CENTRALIZED_KINDS:
            raise ValueError(f'unknown centralized goal kind: {kind}')
        self.kind = kind
        self.episode_seed = episode_seed
        self.bounds = bounds
        self.replan_period = replan_period

    def plan(self, obs: Observation) -> np.ndarray:
        return centralized_goal(self.kind, obs, self.episode_seed, self.bounds)


@dataclass(frozen=True)
class RrtParams:
    step_size: float = 0.5
    goal_bias: float = 0.1
    max_nodes: int = 5000
    radius: float = AGENT_RADIUS
    # Spacing of the collision samples along an edge
    resolution: float = 0.05
    replan_period: int = 40

    def __post_init__(self):
        if self.step_size <= 0 or self.resolution <= 0 or self.radius <= 0:
            raise ValueError('step_size, resolution and radius must be positive')
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError('goal_bias must lie in [0, 1]')
        if self.max_nodes < 1:
            raise ValueError('max_nodes must be at least 1')


@dataclass
class RrtTree:
    nodes: np.ndarray
    parents: np.ndarray
    params: RrtParams

    @property
    def size(self) -> int:
        return len(self.nodes)

    def branch(self, index: int) -> np.ndarray:
        """
        Nodes from the root to node `index`.
        """
        chain = []
        while index >= 0:
            chain.append(self.nodes[index])
            index = int(self.parents[index])
        return np.array(chain[::-1])


@dataclass
class RrtResult:
    success: bool
    path: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    tree: Optional[RrtTree] = None

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.path, axis=0), axis=1))) if len(self.path) > 1 else 0.0


def edge_free(world: World, a, b, params: RrtParams) -> bool:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    count = max(2, int(math.ceil(np.linalg.norm(b - a) / params.resolution)) + 1)
    points = a + np.linspace(0.0, 1.0, count)[:, None] * (b - a)
    return not bool(np.any(collides_many(world, points, params.radius)))


def rrt_plan(world: World, start, goal, params: Optional[RrtParams] = None, rng_seed: int = 0,
             rng: Optional[np.random.Generator] = None) -> RrtResult:
    """
    Grow a rapidly exploring random tree from start until a node reaches goal.

    :param world: World whose obstacles the agent disk must avoid
    :param start: Collision-free start point
    :param goal: Target point
    :param params: Tree settings
    :param rng_seed: Seed used when no generator is passed
    :param rng: Generator to draw samples from
    :return: Root-to-goal waypoints on success; the failed tree otherwise
    :rtype: RrtResult
    :raises ValueError: If the start is in collision
    """
    params = params or RrtParams()
    rng = rng if rng is not None else np.random.default_rng(rng_seed)
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if collides_many(world, start, params.radius)[0]:
        raise ValueError('RRT start is in collision')

    nodes = np.empty((params.max_nodes, 2))
    parents = np.full(params.max_nodes, -1, dtype=np.int64)
    nodes[0] = start
    count = 1
    bounds = world.bounds
    reached = None
    if np.linalg.norm(goal - start) <= params.step_size and edge_free(world, start, goal, params):
        reached = 0
    attempts = 0
    while reached is None and count < params.max_nodes and attempts < 20 * params.max_nodes:
        attempts += 1
        if rng.random() < params.goal_bias:
            sample = goal
        else:
            sample = np.array([rng.uniform(bounds.x0, bounds.x1), rng.uniform(bounds.y0, bounds.y1)])
        offsets = nodes[:count] - sample
        nearest = int(np.argmin(np.einsum('ij,ij->i', offsets, offsets)))
        direction = sample - nodes[nearest]
        distance = float(np.linalg.norm(direction))
        if distance < 1e-9:
            continue
        new = nodes[nearest] + direction * min(1.0, params.step_size / distance)
        if not edge_free(world, nodes[nearest], new, params):
            continue
        nodes[count] = new
        parents[count] = nearest
        count += 1
        if np.linalg.norm(goal - new) <= params.step_size and edge_free(world, new, goal, params):
            reached = count - 1

    tree = RrtTree(nodes[:count].copy(), parents[:count].copy(), params)
    if reached is None:
        logger.debug('rrt failed after %d nodes', count)
        return RrtResult(False, np.empty((0, 2)), tree)
    path = np.vstack([tree.branch(reached), goal])
    return RrtResult(True, path, tree)


class WaypointPath:
    """
    World-frame waypoints with a cursor on the first unreached one.
    """

    def __init__(self, points, tolerance: float = WAYPOINT_TOLERANCE):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        if len(self.points) == 0:
            raise ValueError('a waypoint path needs at least one point')
        self.tolerance = tolerance
        self.cursor = 0

    def current(self) -> np.ndarray:
        return self.points[self.cursor]

    def advance(self, position) -> np.ndarray:
        position = np.asarray(position, dtype=float)
        while (self.cursor < len(self.points) - 1
               and np.linalg.norm(self.points[self.cursor] - position) < self.tolerance):
            self.cursor += 1
        return self.current()


def rrt_follow(path: WaypointPath, obs: Observation, params: Optional[ControllerParams] = None) -> Command:
    """
    Drive toward the first unreached waypoint with the potential-field controller.
    """
    target = path.advance(obs.world_pose.position)
    goal = to_polar(points_to_frame(target, obs.world_pose.as_array()))
    return act(obs.with_goal(goal), params or ControllerParams())


class RrtFollower:
    """
    Controller that plans an RRT to its current goal and follows it; replans when the goal moves.
    """

    def __init__(self, world: World, rrt: Optional[RrtParams] = None, params: Optional[ControllerParams] = None,
                 rng_seed: int = 0, agent_index: int = 0):
        self.world = world
        self.rrt = rrt or RrtParams()
        self.params = params or ControllerParams()
        self.rng = np.random.default_rng(np.random.SeedSequence([rng_seed, agent_index]))
        self.path: Optional[WaypointPath] = None
        self.goal: Optional[np.ndarray] = None

    def act(self, obs: Observation) -> Command:
        reference = obs.world_pose.as_array()
        goal = points_from_frame(from_polar(obs.goal), reference)
        if self.goal is None or np.linalg.norm(goal - self.goal) > 1e-6:
            self.goal = goal
            try:
                result = rrt_plan(self.world, obs.world_pose.position, goal, self.rrt, rng=self.rng)
            except ValueError:
                result = RrtResult(False)
            if result.success:
                self.path = WaypointPath(result.path)
            else:
                logger.debug('agent %d keeps its previous path: no RRT path to %s', obs.observer, goal)
        if self.path is None:
            return Command(0.0, 0.0)
        return rrt_follow(self.path, obs, self.params)


def advance_along(path: np.ndarray, distance: float) -> np.ndarray:
    """
    Point reached after travelling `distance` along a polyline from its first point.
    """
    for a, b in zip(path[:-1], path[1:]):
        length = float(np.linalg.norm(b - a))
        if distance <= length:
            return a + (b - a) * (distance / length if length > 0 else 0.0)
        distance -= length
    return path[-1].copy()


def rrt_score_fn(obs: Observation, world: World, config: PlannerConfig, rrt: RrtParams,
                 rng: np.random.Generator):
    """
    Score goals by advancing every agent T steps at full speed along its RRT path to the goal.

    A goal that any agent cannot reach is scored with every agent held in place.
    """
    reference = obs.world_pose.as_array()
    starts = points_from_frame(obs.positions(), reference)
    travel = config.T * MAX_LINEAR_VEL * DT

    def score(goals: np.ndarray) -> np.ndarray:
        finals = np.repeat(starts[None], len(goals), axis=0)
        for g, goal in enumerate(points_from_frame(goals, reference)):
            reached = []
            for start in starts:
                try:
                    result = rrt_plan(world, start, goal, rrt, rng=rng)
                except ValueError:
                    break
                if not result.success:
                    break
                reached.append(advance_along(result.path, travel))
            else:
                finals[g] = reached
        return rendezvous_rewards(finals, config.d)
    return score


def rrt_cem_plan(obs: Observation, world: World, config: Optional[PlannerConfig] = None,
                 rrt: Optional[RrtParams] = None, rng_seed: int = 0,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    CEM over goals with RRT-simulated agent motion as the scoring model.

    :return: Goal in the observer's frame
    :rtype: np.ndarray
    """
    return _rrt_cem_search(obs, world, config or PlannerConfig(), rrt or RrtParams(),
                           rng if rng is not None else np.random.default_rng(rng_seed)).mean


def _rrt_cem_search(obs: Observation, world: World, config: PlannerConfig, rrt: RrtParams,
                    rng: np.random.Generator):
    initial = GoalDistribution.around(obs.positions(), config, world.bounds)
    return cem_optimize(initial, rrt_score_fn(obs, world, config, rrt, rng), config, rng,
                        bounds_clip(obs, world.bounds))


class RrtCemPlanner:
    def __init__(self, world: World, config: Optional[PlannerConfig] = None, rrt: Optional[RrtParams] = None,
                 rng_seed: int = 0, agent_index: int = 0):
        self.world = world
        self.config = config or PlannerConfig()
        self.rrt = rrt or RrtParams()
        self.replan_period = self.config.T_h
        self.rng = np.random.default_rng(np.random.SeedSequence([rng_seed, agent_index]))
        self.last_decision: Optional[DecisionRecord] = None

    def plan(self, obs: Observation) -> np.ndarray:
        result = _rrt_cem_search(obs, self.world, self.config, self.rrt, self.rng)
        self.last_decision = DecisionRecord(obs.timestamp, obs.observer, result.iterations, result.std,
                                            result.elite_rewards)
        return result.mean
