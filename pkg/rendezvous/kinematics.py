"""
Differential-drive dynamics, multiagent episode stepping and observation assembly.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import AgentError, SpawnFailedError
from .geometry import World, collides, scan
from .models import (ANGULAR_ACCEL, LINEAR_ACCEL, MAX_ANGULAR_VEL, MAX_LINEAR_VEL, AgentState, Command,
                     EpisodeConfig, EpisodeTrace, Frame, Observation, ObservationHistory, Pose, within_rendezvous,
                     wrap_angle)

logger = logging.getLogger(__name__)


def to_frame(poses, reference) -> np.ndarray:
    """
    Express poses (..., 3) relative to reference poses (..., 3): translate, then rotate.
    """
    poses = np.asarray(poses, dtype=float)
    reference = np.asarray(reference, dtype=float)
    dx = poses[..., 0] - reference[..., 0]
    dy = poses[..., 1] - reference[..., 1]
    c, s = np.cos(reference[..., 2]), np.sin(reference[..., 2])
    heading = wrap_angle(poses[..., 2] - reference[..., 2])
    return np.stack(np.broadcast_arrays(c * dx + s * dy, -s * dx + c * dy, heading), axis=-1)


def from_frame(relative, reference) -> np.ndarray:
    """
    Inverse of to_frame.
    """
    relative = np.asarray(relative, dtype=float)
    reference = np.asarray(reference, dtype=float)
    c, s = np.cos(reference[..., 2]), np.sin(reference[..., 2])
    x = reference[..., 0] + c * relative[..., 0] - s * relative[..., 1]
    y = reference[..., 1] + s * relative[..., 0] + c * relative[..., 1]
    heading = wrap_angle(reference[..., 2] + relative[..., 2])
    return np.stack(np.broadcast_arrays(x, y, heading), axis=-1)


def points_to_frame(points, reference) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    padded = np.concatenate([points, np.zeros(points.shape[:-1] + (1,))], axis=-1)
    return to_frame(padded, reference)[..., :2]


def points_from_frame(points, reference) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    padded = np.concatenate([points, np.zeros(points.shape[:-1] + (1,))], axis=-1)
    return from_frame(padded, reference)[..., :2]


def to_polar(points) -> np.ndarray:
    """
    Planar points (..., 2) in an agent frame to (range, bearing).
    """
    points = np.asarray(points, dtype=float)
    return np.stack([np.hypot(points[..., 0], points[..., 1]),
                     np.arctan2(points[..., 1], points[..., 0])], axis=-1)


def from_polar(polar) -> np.ndarray:
    polar = np.asarray(polar, dtype=float)
    return np.stack([polar[..., 0] * np.cos(polar[..., 1]), polar[..., 0] * np.sin(polar[..., 1])], axis=-1)


def step_agent(state: AgentState, cmd: Command, dt: float, world: World) -> AgentState:
    """
    Advance one agent by dt under acceleration and velocity limits.

    Heading is integrated first, then position advances along the new heading.
    A colliding move reverts the position and zeroes both velocities; the
    heading update is kept.

    :param state: Current agent state
    :param cmd: Target velocities
    :param dt: Step length in seconds
    :param world: World used for collision checks
    :return: The next state
    :rtype: AgentState
    """
    if dt <= 0:
        raise ValueError('dt must be positive')
    v_step = LINEAR_ACCEL * dt
    w_step = ANGULAR_ACCEL * dt
    v = state.linear_vel + float(np.clip(cmd.v - state.linear_vel, -v_step, v_step))
    v = float(np.clip(v, 0.0, MAX_LINEAR_VEL))
    w = state.angular_vel + float(np.clip(cmd.theta - state.angular_vel, -w_step, w_step))
    w = float(np.clip(w, -MAX_ANGULAR_VEL, MAX_ANGULAR_VEL))

    heading = wrap_angle(state.pose.heading + w * dt)
    x = state.pose.x + v * dt * math.cos(heading)
    y = state.pose.y + v * dt * math.sin(heading)
    if collides(world, (x, y), state.radius):
        return AgentState(Pose(state.pose.x, state.pose.y, heading), 0.0, 0.0, state.radius, state.policy)
    return AgentState(Pose(x, y, heading), v, w, state.radius, state.policy)


def spawn(config: EpisodeConfig, world: World, policies: Optional[Sequence[str]] = None) -> list[AgentState]:
    """
    Place agents collision-free on a regular polygon whose side is the initial separation.

    Agent k must also lie inside world.spawn_zones[k] when that zone exists.

    :param config: Episode configuration (n_agents, separation, seed, radius)
    :param world: World to spawn in
    :param policies: Optional policy id per agent
    :return: Initial agent states at rest
    :rtype: list[AgentState]
    :raises SpawnFailedError: If no valid placement is found within the retry budget
    """
    rng = np.random.default_rng(config.rng_seed)
    n = config.n_agents
    policies = list(policies) if policies is not None else ['p2p'] * n
    ring = config.initial_separation / (2.0 * math.sin(math.pi / n))
    zones = world.spawn_zones
    bounds = world.bounds
    margin = config.agent_radius

    for _attempt in range(config.spawn_attempts):
        area = zones[0] if zones else bounds
        first = np.array([rng.uniform(max(area.x0, bounds.x0 + margin), min(area.x1, bounds.x1 - margin)),
                          rng.uniform(max(area.y0, bounds.y0 + margin), min(area.y1, bounds.y1 - margin))])
        phi = rng.uniform(-math.pi, math.pi)
        headings = rng.uniform(-math.pi, math.pi, size=n)
        center = first - ring * np.array([math.cos(phi), math.sin(phi)])
        angles = phi + 2.0 * math.pi * np.arange(n) / n
        positions = center + ring * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        positions[0] = first

        in_zones = all(zones[k].contains(positions[k]) for k in range(min(n, len(zones))))
        if in_zones and not any(collides(world, p, config.agent_radius) for p in positions):
            return [AgentState(Pose(p[0], p[1], h), 0.0, 0.0, config.agent_radius, policy)
                    for p, h, policy in zip(positions, headings, policies)]
    raise SpawnFailedError(config.spawn_attempts)


class ObserverMemory:
    """
    Rolling window of one observer's own past frames; never shared between agents.
    """

    def __init__(self, length: int):
        self.frames = deque(maxlen=length)
        self.length = length

    def push(self, world_poses: np.ndarray, scan_ranges: np.ndarray) -> None:
        self.frames.append((world_poses, scan_ranges))

    def history(self, reference: np.ndarray) -> ObservationHistory:
        frames = list(self.frames)
        # Short histories are padded by repeating the oldest frame
        frames = [frames[0]] * (self.length - len(frames)) + frames
        poses = np.stack([f[0] for f in frames], axis=1)
        scans = np.stack([f[1] for f in frames], axis=0)
        return ObservationHistory(to_frame(poses, reference), scans)


def observe(states: Sequence[AgentState], world: World, goals, observer: int, *,
            max_range: float = 10.0, lidar_noise_std: float = 0.0, pose_noise_std: float = 0.0,
            rng: Optional[np.random.Generator] = None, timestamp: int = 0,
            memory: Optional[ObserverMemory] = None) -> Observation:
    """
    Assemble one agent's observation: poses relative to its own frame, its scan and its polar goal.

    :param states: All agent states (world frame)
    :param world: World for the lidar
    :param goals: World-frame goal per agent
    :param observer: Index of the observing agent
    :param memory: Optional rolling window that receives this frame and backs Observation.history
    :return: The observation of agent `observer`
    :rtype: Observation
    """
    n = len(states)
    if not 0 <= observer < n:
        raise IndexError(f'observer {observer} out of range for {n} agents')
    world_poses = np.array([s.pose.as_array() for s in states])
    order = [observer] + [k for k in range(n) if k != observer]
    observed = world_poses[order]
    if pose_noise_std > 0.0:
        rng = rng if rng is not None else np.random.default_rng()
        observed[1:] += rng.normal(0.0, pose_noise_std, size=observed[1:].shape)
        observed[1:, 2] = wrap_angle(observed[1:, 2])

    own_world = states[observer].pose
    reference = own_world.as_array()
    lidar = scan(world, own_world, max_range, lidar_noise_std, rng)
    frame = Frame('agent', observer, timestamp)
    relative = to_frame(observed, reference)
    relative[0] = 0.0

    history = None
    if memory is not None:
        memory.push(observed, lidar.ranges)
        history = memory.history(reference)

    goal = to_polar(points_to_frame(np.asarray(goals[observer], dtype=float), reference))
    return Observation(
        own_pose=Pose.from_array(relative[0], frame),
        other_poses=tuple(Pose.from_array(p, frame) for p in relative[1:]),
        scan=lidar,
        goal=goal,
        world_pose=own_world,
        observer=observer,
        timestamp=timestamp,
        history=history,
    )


class Planner(Protocol):
    replan_period: int

    def plan(self, obs: Observation) -> np.ndarray:
        """Return a goal in the observer's frame."""


class Controller(Protocol):
    def act(self, obs: Observation) -> Command:
        """Return a velocity command toward obs.goal."""


class FixedGoalPlanner:
    """
    Always proposes the same world-frame goal.
    """

    def __init__(self, goal, replan_period: int = 1):
        self.goal = np.asarray(goal, dtype=float)
        self.replan_period = replan_period

    def plan(self, obs: Observation) -> np.ndarray:
        return points_to_frame(self.goal, obs.world_pose.as_array())


def run_episode(config: EpisodeConfig, world: World, planners: Sequence[Planner],
                controllers: Sequence[Controller], *, states: Optional[Sequence[AgentState]] = None,
                record_scans: bool = False, planning_order: Optional[Sequence[int]] = None) -> EpisodeTrace:
    """
    Run one decentralized episode.

    Each agent's planner sees only that agent's observation and is consulted every
    replan_period steps; controllers act every step; all agents step simultaneously.

    :param config: Episode configuration
    :param world: World to run in
    :param planners: One planner per agent
    :param controllers: One controller per agent
    :param states: Optional initial states; spawned from config.rng_seed otherwise
    :param record_scans: Keep every observer scan in the trace
    :param planning_order: Order in which planners are consulted (outcome does not depend on it)
    :return: The episode trace
    :rtype: EpisodeTrace
    :raises AgentError: If a planner or controller fails
    """
    n = config.n_agents
    if len(planners) != n or len(controllers) != n:
        raise ValueError(f'expected {n} planners and {n} controllers')
    states = list(states) if states is not None else spawn(config, world)
    order = list(planning_order) if planning_order is not None else list(range(n))
    rngs = [np.random.default_rng([config.rng_seed, 1, i]) for i in range(n)]
    memories = [ObserverMemory(config.history_length) for _ in range(n)]
    goals = np.array([s.pose.position for s in states])

    poses_log, goals_log, scans_log, decisions = [], [], [], []
    held = 0
    success = False
    rendezvous_step = None
    for step in range(config.max_steps):
        observations = [observe(states, world, goals, i, max_range=config.lidar_max_range,
                                lidar_noise_std=config.lidar_noise_std, pose_noise_std=config.pose_noise_std,
                                rng=rngs[i], timestamp=step, memory=memories[i]) for i in range(n)]
        frame = np.array([s.pose.as_array() for s in states])
        held = held + 1 if within_rendezvous(frame[:, :2], config.rendezvous_d) else 0
        done = config.stop_on_rendezvous and held >= config.hold_steps

        if not done:
            for i in order:
                if step % planners[i].replan_period:
                    continue
                try:
                    goal = planners[i].plan(observations[i])
                except AgentError:
                    raise
                except Exception as e:
                    raise AgentError(i, e) from e
                goals[i] = points_from_frame(goal, observations[i].world_pose.as_array())
                record = getattr(planners[i], 'last_decision', None)
                if record is not None:
                    record.step, record.agent = step, i
                    decisions.append(record)
                    planners[i].last_decision = None

        poses_log.append(frame)
        goals_log.append(goals.copy())
        if record_scans:
            scans_log.append(np.stack([o.scan.ranges for o in observations]))
        if done:
            success = True
            rendezvous_step = step
            break

        commands = []
        for i in range(n):
            obs = observations[i].with_goal(to_polar(points_to_frame(goals[i], observations[i].world_pose.as_array())))
            try:
                commands.append(controllers[i].act(obs))
            except Exception as e:
                raise AgentError(i, e) from e
        states = [step_agent(s, c, config.dt, world) for s, c in zip(states, commands)]

    logger.debug('episode seed=%d steps=%d success=%s', config.rng_seed, len(poses_log), success)
    return EpisodeTrace(
        poses=np.array(poses_log),
        goals=np.array(goals_log),
        config=config,
        success=success,
        rendezvous_step=rendezvous_step,
        scans=np.array(scans_log) if record_scans else None,
        policies=tuple(s.policy for s in states),
        decisions=decisions,
    )
