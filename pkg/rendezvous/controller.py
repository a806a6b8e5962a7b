"""
Goal-conditioned potential-field navigation policy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DEFAULT_MAX_RANGE, LidarScan
from .models import MAX_ANGULAR_VEL, MAX_LINEAR_VEL, Command, Observation, wrap_angle


@dataclass(frozen=True)
class ControllerParams:
    attraction_gain: float = 1.0
    repulsion_gain: float = 0.01
    repulsion_range: float = 1.0
    heading_gain: float = 1.0
    policy: str = 'p2p'

    def __post_init__(self):
        if min(self.attraction_gain, self.repulsion_gain, self.heading_gain) <= 0:
            raise ValueError('controller gains must be positive')
        if not 0 < self.repulsion_range <= DEFAULT_MAX_RANGE:
            raise ValueError('repulsion_range must lie in (0, lidar max range]')


def steering_vector(obs: Observation, params: ControllerParams) -> np.ndarray:
    """
    Attraction toward the goal plus inverse-square repulsion from close lidar returns.

    :param obs: Observation with a polar goal and a scan
    :param params: Controller gains
    :return: The summed vector in the agent frame
    :rtype: np.ndarray
    """
    goal_bearing = obs.goal[1]
    vector = params.attraction_gain * np.array([math.cos(goal_bearing), math.sin(goal_bearing)])
    ranges = obs.scan.ranges
    close = ranges < params.repulsion_range
    if np.any(close):
        bearings = LidarScan.bearings()[close]
        weights = params.repulsion_gain / np.maximum(ranges[close], 1e-6) ** 2
        vector -= np.array([np.sum(weights * np.cos(bearings)), np.sum(weights * np.sin(bearings))])
    return vector


def act(obs: Observation, params: ControllerParams) -> Command:
    """
    Compute a velocity command toward obs.goal; a pure function of (obs, params).

    :param obs: Observation of the controlled agent
    :param params: Controller gains
    :return: Command within the velocity limits
    :rtype: Command
    """
    vector = steering_vector(obs, params)
    error = wrap_angle(math.atan2(vector[1], vector[0]))
    theta = float(np.clip(params.heading_gain * error, -MAX_ANGULAR_VEL, MAX_ANGULAR_VEL))
    v = MAX_LINEAR_VEL * (1.0 - min(1.0, abs(error) / math.pi))
    v = float(np.clip(min(v, obs.goal[0]), 0.0, MAX_LINEAR_VEL))
    return Command(v, theta)


class P2PController:
    """
    Per-agent wrapper so the episode loop can treat controllers uniformly.
    """

    def __init__(self, params: ControllerParams | None = None):
        self.params = params or ControllerParams()

    def act(self, obs: Observation) -> Command:
        return act(obs, self.params)
