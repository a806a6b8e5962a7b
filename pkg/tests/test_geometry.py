import json
import math
import os
import unittest

import numpy as np

from rendezvous.errors import OutOfWorldError, ParseError, UnknownEnvironmentError
from rendezvous.geometry import (N_RAYS, LidarScan, Rect, Segment, World, collides, collides_many, dumps_world,
                                 loads_world, make_environment, ray_cast, scan)
from rendezvous.models import Pose


class TestGeometry(unittest.TestCase):
    def setUp(self):
        self.worlds = {name: make_environment(name) for name in ('simple', 'wall')}

        # Load the test cases from the JSON file
        test_data_path = os.path.join(os.path.dirname(__file__), 'data', 'ray_cases.json')
        with open(test_data_path) as f:
            self.cases = json.load(f)

    def test_ray_cast(self):
        for case in self.cases.get('RayCases'):
            world = self.worlds[case['environment']]
            distance = ray_cast(world, case['origin'], case['direction'], case['max_range'])
            self.assertAlmostEqual(distance, case['expected'], places=9, msg=case)

    def test_ray_cast_outside_world(self):
        with self.assertRaises(OutOfWorldError):
            ray_cast(self.worlds['simple'], (11.0, 0.0), (1.0, 0.0))

        with self.assertRaises(ValueError):
            ray_cast(self.worlds['simple'], (0.0, 0.0), (1.0, 1.0))

    def test_scan(self):
        # Nothing within range from the center of the empty world
        ranges = scan(self.worlds['simple'], Pose(0.0, 0.0, 0.0), max_range=5.0).ranges
        self.assertEqual(ranges.shape, (N_RAYS,))
        np.testing.assert_allclose(ranges, 5.0)

        # Closest return faces the east bound one meter away
        ranges = scan(self.worlds['simple'], Pose(9.0, 0.0, 0.0)).ranges
        self.assertAlmostEqual(ranges.min(), 1.0, places=3)
        self.assertTrue(np.all((ranges >= 0.0) & (ranges <= 10.0)))

        # Scans are symmetric about the heading in a symmetric world
        ranges = scan(self.worlds['simple'], Pose(0.0, 0.0, math.pi / 2), max_range=20.0).ranges
        np.testing.assert_allclose(ranges, ranges[::-1], atol=1e-9)

        with self.assertRaises(OutOfWorldError):
            scan(self.worlds['simple'], Pose(0.0, 12.0, 0.0))

    def test_scan_noise(self):
        pose = Pose(1.0, 2.0, 0.3)
        first = scan(self.worlds['wall'], pose, noise_std=0.1, rng=np.random.default_rng(4)).ranges
        second = scan(self.worlds['wall'], pose, noise_std=0.1, rng=np.random.default_rng(4)).ranges
        np.testing.assert_array_equal(first, second)
        self.assertTrue(np.all((first >= 0.0) & (first <= 10.0)))

    def test_lidar_scan_validation(self):
        with self.assertRaises(ValueError):
            LidarScan(np.zeros(N_RAYS - 1))
        with self.assertRaises(ValueError):
            LidarScan(np.full(N_RAYS, 11.0))

    def test_collides(self):
        for case in self.cases.get('CollisionCases'):
            world = self.worlds[case['environment']]
            self.assertEqual(collides(world, case['position'], case['radius']), case['expected'], msg=case)

        with self.assertRaises(ValueError):
            collides(self.worlds['simple'], (0.0, 0.0), 0.0)

    def test_collides_many_matches_collides(self):
        world = make_environment('navigation', 5)
        world = World(world.bounds, world.obstacles + (Segment(-9.0, -9.0, -6.0, -6.5),), world.name)
        points = np.random.default_rng(0).uniform(-10.0, 10.0, size=(300, 2))
        expected = [collides(world, point, 0.3) for point in points]
        self.assertEqual(collides_many(world, points, 0.3).tolist(), expected)

    def test_make_environment(self):
        for name in ('training_random', 'navigation'):
            self.assertEqual(dumps_world(make_environment(name, 7)), dumps_world(make_environment(name, 7)))
        self.assertNotEqual(dumps_world(make_environment('training_random', 1)),
                            dumps_world(make_environment('training_random', 2)))

        # Spawn zones of the training worlds stay clear of obstacles
        for seed in range(5):
            world = make_environment('training_random', seed)
            self.assertEqual(len(world.spawn_zones), 2)
            for zone in world.spawn_zones:
                self.assertFalse(collides(world, zone.center, 0.3))

        with self.assertRaises(UnknownEnvironmentError):
            make_environment('maze')

    def test_world_snapshot(self):
        world = make_environment('navigation', 3)
        self.assertEqual(loads_world(dumps_world(world)), world)

        with self.assertRaises(ParseError) as context:
            loads_world('bounds -10 -10 10 10\nrect 0 0 1\n')
        self.assertEqual(context.exception.line_number, 2)

        with self.assertRaises(ParseError):
            loads_world('rect 0 0 1 1\n')

    def test_world_validation(self):
        with self.assertRaises(ValueError):
            Rect(1.0, 0.0, 0.0, 1.0)
        with self.assertRaises(ValueError):
            World(Rect(0.0, 0.0, 0.5, 5.0))
        with self.assertRaises(ValueError):
            World(Rect(0.0, 0.0, 5.0, 5.0), (Rect(6.0, 6.0, 7.0, 7.0),))

    def test_training_obstacle_count(self):
        for seed in range(20):
            count = len(make_environment('training_random', seed).obstacles)
            self.assertGreaterEqual(count, 4, msg=seed)
            self.assertLessEqual(count, 10, msg=seed)


class TestRayProperties(unittest.TestCase):
    def test_corner_hit(self):
        world = World(Rect(-10.0, -10.0, 10.0, 10.0), (Rect(2.0, 2.0, 3.0, 5.0),))
        direction = (math.sqrt(0.5), math.sqrt(0.5))
        self.assertAlmostEqual(ray_cast(world, (0.0, 0.0), direction), 2.0 * math.sqrt(2.0), places=9)

    def test_removing_obstacles_never_shortens_rays(self):
        world = make_environment('navigation', 5)
        rng = np.random.default_rng(1)
        origins = rng.uniform(-9.5, 9.5, size=(10, 2))
        angles = rng.uniform(-math.pi, math.pi, size=10)
        for index in range(len(world.obstacles)):
            reduced = world.without(index)
            self.assertEqual(len(reduced.obstacles), len(world.obstacles) - 1)
            for origin, angle in zip(origins, angles):
                direction = (math.cos(angle), math.sin(angle))
                self.assertGreaterEqual(ray_cast(reduced, origin, direction, 20.0),
                                        ray_cast(world, origin, direction, 20.0) - 1e-12)

    def test_scan_follows_world_rotation(self):
        # A quarter turn maps (x, y) to (-y, x) and keeps rectangles axis-aligned
        world = make_environment('navigation', 2)
        rotated = World(world.bounds, tuple(Rect(-o.y1, o.x0, -o.y0, o.x1) for o in world.obstacles))
        pose = Pose(0.3, -0.7, 0.4)
        turned = Pose(0.7, 0.3, 0.4 + math.pi / 2)
        np.testing.assert_allclose(scan(rotated, turned).ranges, scan(world, pose).ranges, atol=1e-9)
