"""
Static world representation, exact lidar ray casting and the environment catalog.

Obstacles are axis-aligned rectangles or line segments. Every ray query is
answered analytically against the edges of the world bounds and of every
obstacle, so scans are exact and deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import ConfigurationError, OutOfWorldError, ParseError, UnknownEnvironmentError

N_RAYS = 222
FIELD_OF_VIEW = math.radians(220.0)
DEFAULT_MAX_RANGE = 10.0

# Training world extent and the environments used for evaluation
WORLD_HALF_EXTENT = 10.0
ENVIRONMENTS = ('training_random', 'simple', 'wall', 'navigation')

_PARALLEL_TOLERANCE = 1e-12
_EDGE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f'rectangle min-corner must be below max-corner: {self}')

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0])

    def edges(self) -> np.ndarray:
        """
        Four boundary edges as rows (ax, ay, bx, by), counter-clockwise.
        """
        return np.array([
            [self.x0, self.y0, self.x1, self.y0],
            [self.x1, self.y0, self.x1, self.y1],
            [self.x1, self.y1, self.x0, self.y1],
            [self.x0, self.y1, self.x0, self.y0],
        ], dtype=float)

    def contains(self, point) -> bool:
        return self.x0 <= point[0] <= self.x1 and self.y0 <= point[1] <= self.y1

    def distance_to(self, point) -> float:
        dx = max(self.x0 - point[0], 0.0, point[0] - self.x1)
        dy = max(self.y0 - point[1], 0.0, point[1] - self.y1)
        return math.hypot(dx, dy)

    def intersects(self, other: 'Rect') -> bool:
        return self.x0 < other.x1 and other.x0 < self.x1 and self.y0 < other.y1 and other.y0 < self.y1

    def to_line(self, kind: str = 'rect') -> str:
        return f'{kind} {self.x0:.6f} {self.y0:.6f} {self.x1:.6f} {self.y1:.6f}'


@dataclass(frozen=True)
class Segment:
    ax: float
    ay: float
    bx: float
    by: float

    def __post_init__(self):
        if self.ax == self.bx and self.ay == self.by:
            raise ValueError(f'segment endpoints must be distinct: {self}')

    def edges(self) -> np.ndarray:
        return np.array([[self.ax, self.ay, self.bx, self.by]], dtype=float)

    def distance_to(self, point) -> float:
        return float(point_segment_distance(np.asarray(point, dtype=float), self.edges())[0])

    def bounding_rect(self) -> Rect:
        # Degenerate extents are padded so axis-aligned segments still yield a valid Rect
        pad = 1e-9
        return Rect(min(self.ax, self.bx) - pad, min(self.ay, self.by) - pad,
                    max(self.ax, self.bx) + pad, max(self.ay, self.by) + pad)

    def to_line(self) -> str:
        return f'seg {self.ax:.6f} {self.ay:.6f} {self.bx:.6f} {self.by:.6f}'


Obstacle = Union[Rect, Segment]


@dataclass(frozen=True)
class LidarScan:
    ranges: np.ndarray
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self):
        if self.max_range <= 0:
            raise ValueError('max_range must be positive')
        if self.ranges.shape != (N_RAYS,):
            raise ValueError(f'a scan holds exactly {N_RAYS} ranges, got {self.ranges.shape}')
        if np.any(self.ranges < 0.0) or np.any(self.ranges > self.max_range):
            raise ValueError('scan ranges must lie in [0, max_range]')

    @staticmethod
    def bearings() -> np.ndarray:
        """
        Ray bearings relative to the sensor heading, spread uniformly over the field of view.
        """
        return np.linspace(-FIELD_OF_VIEW / 2.0, FIELD_OF_VIEW / 2.0, N_RAYS)


@dataclass(frozen=True)
class World:
    bounds: Rect
    obstacles: tuple = ()
    name: str = 'custom'
    spawn_zones: tuple = ()

    def __post_init__(self):
        if self.bounds.width < 1.0 or self.bounds.height < 1.0:
            raise ValueError('world bounds must be at least 1 m on each side')
        for obstacle in self.obstacles:
            box = obstacle if isinstance(obstacle, Rect) else obstacle.bounding_rect()
            if not (box.x0 <= self.bounds.x1 and self.bounds.x0 <= box.x1
                    and box.y0 <= self.bounds.y1 and self.bounds.y0 <= box.y1):
                raise ValueError(f'obstacle {obstacle} does not intersect the world bounds')

    @cached_property
    def edges(self) -> np.ndarray:
        """
        All ray-blocking edges (bounds first, then obstacles) as an (S, 4) array.
        """
        parts = [self.bounds.edges()] + [obstacle.edges() for obstacle in self.obstacles]
        return np.concatenate(parts, axis=0)

    @cached_property
    def _rects(self) -> np.ndarray:
        rects = [[o.x0, o.y0, o.x1, o.y1] for o in self.obstacles if isinstance(o, Rect)]
        return np.array(rects, dtype=float).reshape(-1, 4)

    @cached_property
    def _segments(self) -> np.ndarray:
        segments = [[o.ax, o.ay, o.bx, o.by] for o in self.obstacles if isinstance(o, Segment)]
        return np.array(segments, dtype=float).reshape(-1, 4)

    def inside(self, point) -> bool:
        return self.bounds.contains(point)

    def without(self, index: int) -> 'World':
        """
        Copy of this world with one obstacle removed.
        """
        obstacles = self.obstacles[:index] + self.obstacles[index + 1:]
        return World(self.bounds, obstacles, self.name, self.spawn_zones)


def point_segment_distance(point: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """
    Distance from one point to each segment row (ax, ay, bx, by).
    """
    a = segments[:, :2]
    ab = segments[:, 2:] - a
    length_sq = np.einsum('ij,ij->i', ab, ab)
    t = np.clip(np.einsum('ij,ij->i', point - a, ab) / np.where(length_sq > 0, length_sq, 1.0), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.hypot(*(point - closest).T)


def _cast_rays(edges: np.ndarray, origin: np.ndarray, directions: np.ndarray, max_range: float) -> np.ndarray:
    # Solve origin + t*d = a + u*e for every (ray, edge) pair
    a = edges[:, :2]
    e = edges[:, 2:] - a
    ao = a - origin
    denom = directions[:, 0:1] * e[:, 1] - directions[:, 1:2] * e[:, 0]
    t_num = ao[:, 0] * e[:, 1] - ao[:, 1] * e[:, 0]
    u_num = ao[:, 0] * directions[:, 1:2] - ao[:, 1] * directions[:, 0:1]
    with np.errstate(divide='ignore', invalid='ignore'):
        t = t_num / denom
        u = u_num / denom
    hit = ((np.abs(denom) > _PARALLEL_TOLERANCE) & (t >= 0.0)
           & (u >= -_EDGE_TOLERANCE) & (u <= 1.0 + _EDGE_TOLERANCE))
    distances = np.where(hit, t, np.inf).min(axis=1)
    return np.minimum(distances, max_range)


def ray_cast(world: World, origin, direction, max_range: float = DEFAULT_MAX_RANGE) -> float:
    """
    Distance from origin along a unit direction to the nearest obstacle or bound.

    :param world: World to query
    :param origin: Planar point inside the world bounds
    :param direction: Unit direction vector
    :param max_range: Sensor range used to clip the result
    :return: Range in meters, clipped to max_range
    :rtype: float
    :raises OutOfWorldError: If the origin is outside the world bounds
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if not world.inside(origin):
        raise OutOfWorldError()
    if abs(np.hypot(*direction) - 1.0) > 1e-9:
        raise ValueError('ray direction must be normalized')
    return float(_cast_rays(world.edges, origin, direction[None, :], max_range)[0])


def scan(world: World, pose, max_range: float = DEFAULT_MAX_RANGE, noise_std: float = 0.0,
         rng: np.random.Generator | None = None) -> LidarScan:
    """
    Simulate the 222-ray lidar at a pose.

    :param world: World to scan
    :param pose: Anything with x, y and heading attributes (world frame)
    :param max_range: Sensor range
    :param noise_std: Std of optional additive Gaussian range noise
    :param rng: Generator used when noise_std > 0
    :return: The simulated scan
    :rtype: LidarScan
    :raises OutOfWorldError: If the pose is outside the world bounds
    """
    origin = np.array([pose.x, pose.y], dtype=float)
    if not world.inside(origin):
        raise OutOfWorldError()
    angles = pose.heading + LidarScan.bearings()
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    ranges = _cast_rays(world.edges, origin, directions, max_range)
    if noise_std > 0.0:
        rng = rng if rng is not None else np.random.default_rng()
        ranges = np.clip(ranges + rng.normal(0.0, noise_std, size=ranges.shape), 0.0, max_range)
    return LidarScan(ranges, max_range)


def collides(world: World, position, radius: float) -> bool:
    """
    Check whether a disk intersects any obstacle or leaves the world bounds.

    :param world: World to query
    :param position: Disk center
    :param radius: Disk radius, must be positive
    :return: True on collision
    :rtype: bool
    """
    if radius <= 0:
        raise ValueError('radius must be positive')
    x, y = float(position[0]), float(position[1])
    b = world.bounds
    if x - radius < b.x0 or x + radius > b.x1 or y - radius < b.y0 or y + radius > b.y1:
        return True
    rects = world._rects
    if len(rects):
        dx = np.maximum.reduce([rects[:, 0] - x, np.zeros(len(rects)), x - rects[:, 2]])
        dy = np.maximum.reduce([rects[:, 1] - y, np.zeros(len(rects)), y - rects[:, 3]])
        if np.any(np.hypot(dx, dy) < radius):
            return True
    segments = world._segments
    if len(segments):
        if np.any(point_segment_distance(np.array([x, y]), segments) < radius):
            return True
    return False


def collides_many(world: World, points, radius: float) -> np.ndarray:
    """
    Vectorized collides over an (m, 2) array of disk centers.
    """
    if radius <= 0:
        raise ValueError('radius must be positive')
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = points[:, 0], points[:, 1]
    b = world.bounds
    hit = (x - radius < b.x0) | (x + radius > b.x1) | (y - radius < b.y0) | (y + radius > b.y1)
    rects = world._rects
    if len(rects):
        dx = np.maximum(np.maximum(rects[None, :, 0] - x[:, None], 0.0), x[:, None] - rects[None, :, 2])
        dy = np.maximum(np.maximum(rects[None, :, 1] - y[:, None], 0.0), y[:, None] - rects[None, :, 3])
        hit |= np.any(np.hypot(dx, dy) < radius, axis=1)
    for segment in world._segments:
        a, ab = segment[:2], segment[2:] - segment[:2]
        t = np.clip((points - a) @ ab / (ab @ ab), 0.0, 1.0)
        hit |= np.hypot(*(points - (a + t[:, None] * ab)).T) < radius
    return hit


def _square(center, side: float) -> Rect:
    half = side / 2.0
    return Rect(center[0] - half, center[1] - half, center[0] + half, center[1] + half)


def _q(value: float) -> float:
    # Millimetre grid so text snapshots reload bit-identically
    return round(float(value), 3)


def _random_rect(rng: np.random.Generator, bounds: Rect, side_range: tuple, region: Rect | None = None) -> Rect:
    region = region or bounds
    width, height = rng.uniform(side_range[0], side_range[1], size=2)
    cx = rng.uniform(max(region.x0, bounds.x0 + width / 2), min(region.x1, bounds.x1 - width / 2))
    cy = rng.uniform(max(region.y0, bounds.y0 + height / 2), min(region.y1, bounds.y1 - height / 2))
    return Rect(_q(cx - width / 2), _q(cy - height / 2), _q(cx + width / 2), _q(cy + height / 2))


def _training_random(rng: np.random.Generator, bounds: Rect) -> World:
    # Two spawn points 5 m apart, kept clear of obstacles
    while True:
        first = rng.uniform(-7.0, 7.0, size=2)
        angle = rng.uniform(-math.pi, math.pi)
        second = first + 5.0 * np.array([math.cos(angle), math.sin(angle)])
        if np.all(np.abs(second) <= 8.0):
            break
    spawn_points = [np.round(first, 3), np.round(second, 3)]

    obstacles = []
    count = int(rng.integers(4, 11))
    for _attempt in range(100 * count):
        if len(obstacles) == count:
            break
        rect = _random_rect(rng, bounds, (0.5, 2.5))
        if all(rect.distance_to(point) >= 1.0 for point in spawn_points):
            obstacles.append(rect)
    if len(obstacles) < count:
        raise ConfigurationError(f'placed {len(obstacles)} of {count} training obstacles')
    zones = tuple(_square(point, 1.0) for point in spawn_points)
    return World(bounds, tuple(obstacles), 'training_random', zones)


def _navigation(rng: np.random.Generator, bounds: Rect) -> World:
    zones = (Rect(-5.0, -2.5, -2.0, 2.5), Rect(2.0, -2.5, 5.0, 2.5))
    keep_out = [Rect(z.x0 - 0.4, z.y0 - 0.4, z.x1 + 0.4, z.y1 + 0.4) for z in zones]
    central = Rect(-1.5, -4.0, 1.5, 4.0)
    scattered = Rect(-7.5, -7.5, 7.5, 7.5)

    obstacles = []
    for region, count in ((central, 6), (scattered, 12)):
        placed = 0
        for _attempt in range(500):
            if placed == count:
                break
            rect = _random_rect(rng, bounds, (0.4, 1.2), region)
            padded = Rect(rect.x0 - 0.7, rect.y0 - 0.7, rect.x1 + 0.7, rect.y1 + 0.7)
            if any(rect.intersects(zone) for zone in keep_out):
                continue
            if any(padded.intersects(other) for other in obstacles):
                continue
            obstacles.append(rect)
            placed += 1
    return World(bounds, tuple(obstacles), 'navigation', zones)


def make_environment(name: str, rng_seed: int = 0) -> World:
    """
    Build one of the catalog environments; a pure function of (name, rng_seed).

    :param name: One of training_random, simple, wall, navigation
    :param rng_seed: Seed for the randomized layouts
    :return: The world
    :rtype: World
    :raises UnknownEnvironmentError: If the name is not in the catalog
    """
    bounds = Rect(-WORLD_HALF_EXTENT, -WORLD_HALF_EXTENT, WORLD_HALF_EXTENT, WORLD_HALF_EXTENT)
    rng = np.random.default_rng(rng_seed)
    if name == 'simple':
        return World(bounds, (), 'simple')
    if name == 'wall':
        # Wall spans x in [-4, 4]; both ends leave a 6 m passage to the bounds
        wall = Rect(-4.0, -0.1, 4.0, 0.1)
        zones = (Rect(-2.5, 1.0, 2.5, 4.0), Rect(-2.5, -4.0, 2.5, -1.0))
        return World(bounds, (wall,), 'wall', zones)
    if name == 'navigation':
        return _navigation(rng, bounds)
    if name == 'training_random':
        return _training_random(rng, bounds)
    raise UnknownEnvironmentError(name)


def dumps_world(world: World) -> str:
    """
    Serialize a world to the plain-text snapshot format.
    """
    lines = [world.bounds.to_line('bounds'), f'name {world.name}']
    for obstacle in world.obstacles:
        lines.append(obstacle.to_line())
    for zone in world.spawn_zones:
        lines.append(zone.to_line('zone'))
    return '\n'.join(lines) + '\n'


def loads_world(text: str, source: str = '<world>') -> World:
    """
    Parse the plain-text snapshot format produced by dumps_world.

    :raises ParseError: On an unknown record or a malformed number
    """
    bounds = None
    name = 'custom'
    obstacles = []
    zones = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        kind, *rest = line.split()
        if kind == 'name':
            name = rest[0] if rest else name
            continue
        if kind not in ('bounds', 'rect', 'seg', 'zone') or len(rest) != 4:
            raise ParseError(source, line_number, f'unexpected record: {line}')
        try:
            values = [float(v) for v in rest]
            if kind == 'bounds':
                bounds = Rect(*values)
            elif kind == 'rect':
                obstacles.append(Rect(*values))
            elif kind == 'seg':
                obstacles.append(Segment(*values))
            else:
                zones.append(Rect(*values))
        except ValueError as e:
            raise ParseError(source, line_number, str(e)) from e
    if bounds is None:
        raise ParseError(source, 1, 'missing bounds header')
    return World(bounds, tuple(obstacles), name, tuple(zones))
