import math
import unittest

import numpy as np

from src.floatlab.errors import GeometryError, QuadratureError
from src.floatlab.geometry_core import (
    ConvexBodySpec,
    Halfspace,
    QuadratureSpec,
    ball_volume,
    body_volume,
    cap_masses,
    cap_moments,
    cap_weighted_volume,
    clip_polygon,
    ellipsoid_cap_bounds,
    halfspace_intersection,
    integrate_over_body,
    membership,
    polygon_area,
    sphere_area,
    support_value,
    total_mass,
)
from src.floatlab.weights import WeightSpec


def disk_segment(d):
    return math.acos(d) - d * math.sqrt(1.0 - d * d)


class TestBodies(unittest.TestCase):

    def test_ball_volumes_and_sphere_areas(self):
        self.assertAlmostEqual(ball_volume(1), 2.0)
        self.assertAlmostEqual(ball_volume(2), math.pi)
        self.assertAlmostEqual(ball_volume(3), 4.0 * math.pi / 3.0)
        self.assertAlmostEqual(sphere_area(1), 2.0)
        self.assertAlmostEqual(sphere_area(2), 2.0 * math.pi)
        self.assertAlmostEqual(sphere_area(3), 4.0 * math.pi)

    def test_closed_form_volumes(self):
        self.assertAlmostEqual(body_volume(ConvexBodySpec.ball(np.zeros(3), 2.0)), 32.0 * math.pi / 3.0)
        self.assertAlmostEqual(body_volume(ConvexBodySpec.ellipsoid(np.zeros(2), [2.0, 1.0])), 2.0 * math.pi)
        self.assertAlmostEqual(body_volume(ConvexBodySpec.box([0, 0, 0], [1, 2, 3])), 6.0, places=10)
        tri = ConvexBodySpec.vpolytope([[0, 0], [1, 0], [0, 1]])
        self.assertAlmostEqual(body_volume(tri), 0.5, places=12)

    def test_radial_quadrature_volume_of_lp_ball(self):
        # area of the unit l4 ball: 4 Gamma(5/4)^2 / Gamma(3/2)
        body = ConvexBodySpec.lp_ball(4.0, [1.0, 1.0])
        exact = 4.0 * math.gamma(1.25) ** 2 / math.gamma(1.5)
        self.assertAlmostEqual(body_volume(body), exact, places=6)

    def test_unbounded_hpolytope_raises(self):
        with self.assertRaises(GeometryError) as ctx:
            ConvexBodySpec.hpolytope([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])
        self.assertIn("unbounded body", str(ctx.exception))

    def test_support_and_membership(self):
        square = ConvexBodySpec.box([-1, -1], [1, 1])
        u = np.array([1.0, 1.0]) / math.sqrt(2.0)
        self.assertAlmostEqual(support_value(square, u), math.sqrt(2.0), places=9)
        ell = ConvexBodySpec.ellipsoid(np.zeros(2), [2.0, 1.0])
        self.assertAlmostEqual(support_value(ell, np.array([1.0, 0.0])), 2.0)
        self.assertTrue(membership(ell, [1.9, 0.0]))
        self.assertFalse(membership(ell, [0.0, 1.1]))
        with self.assertRaises(ValueError):
            support_value(ell, np.array([1.0, 1.0]))

    def test_integrate_over_disk(self):
        disk = ConvexBodySpec.ball(np.zeros(2), 1.0)
        val = integrate_over_body(disk, lambda x: np.sum(x * x, axis=-1))
        self.assertAlmostEqual(val, math.pi / 2.0, places=10)


class TestCaps(unittest.TestCase):

    def test_disk_cap_closed_form(self):
        disk = ConvexBodySpec.ball(np.zeros(2), 1.0)
        one = WeightSpec.constant(2)
        d = np.array([-0.5, 0.0, 0.3, 0.9])
        U = np.tile([[1.0, 0.0]], (4, 1))
        masses = cap_masses(disk, U, d, one, QuadratureSpec())
        expected = [disk_segment(x) for x in d]
        self.assertTrue(np.allclose(masses, expected, atol=1e-13))

    def test_slice_quadrature_matches_closed_form(self):
        ell = ConvexBodySpec.ellipsoid(np.array([0.2, -0.1]), [2.0, 1.0])
        one = WeightSpec.constant(2)
        U = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, -1.0]])
        A = np.array([1.0, 0.5, 0.2])
        exact = cap_masses(ell, U, A, one, QuadratureSpec())
        grid = cap_masses(ell, U, A, one, QuadratureSpec(method="tensor-grid", points=64))
        self.assertTrue(np.allclose(exact, grid, rtol=1e-5))

    def test_cap_first_moment_of_disk(self):
        disk = ConvexBodySpec.ball(np.zeros(2), 1.0)
        m, mom, _ = cap_moments(disk, np.array([[0.0, 1.0]]), np.array([0.5]), WeightSpec.constant(2),
                                QuadratureSpec())
        # int_{y >= 1/2} y dA = (2/3)(1 - 1/4)^{3/2}
        self.assertAlmostEqual(float(mom[0, 1]), (2.0 / 3.0) * 0.75 ** 1.5, places=12)
        self.assertAlmostEqual(float(mom[0, 0]), 0.0, places=12)

    def test_constant_weight_scales_cap_mass(self):
        ball = ConvexBodySpec.ball(np.zeros(3), 1.0)
        cut = Halfspace(np.array([0.0, 0.0, 1.0]), 0.4)
        base = cap_weighted_volume(ball, cut, WeightSpec.constant(3))
        scaled = cap_weighted_volume(ball, cut, WeightSpec.constant(3, 2.5))
        self.assertAlmostEqual(scaled, 2.5 * base, places=12)
        self.assertAlmostEqual(base, math.pi * 0.6 ** 2 * (3 - 0.6) / 3.0, places=12)

    def test_polytope_caps(self):
        square = ConvexBodySpec.box([-1, -1], [1, 1])
        u = np.array([[1.0, 1.0]]) / math.sqrt(2.0)
        m = cap_masses(square, u, np.array([0.0]), WeightSpec.constant(2), QuadratureSpec())
        self.assertAlmostEqual(float(m[0]), 2.0, places=12)
        cube = ConvexBodySpec.box([0, 0, 0], [1, 1, 1])
        m3 = cap_masses(cube, np.array([[0.0, 0.0, 1.0]]), np.array([0.25]), WeightSpec.constant(3),
                        QuadratureSpec())
        self.assertAlmostEqual(float(m3[0]), 0.75, places=12)

    def test_complementary_caps_add_up_to_total_mass(self):
        disk = ConvexBodySpec.ball(np.zeros(2), 1.0)
        w = WeightSpec.custom(2, lambda y: 1.0 + np.sum(y * y, axis=1), eta=1.0, label="1+|y|^2")
        quad = QuadratureSpec(method="tensor-grid", points=64)
        total = total_mass(disk, w, quad)
        self.assertAlmostEqual(total / (1.5 * math.pi), 1.0, delta=2e-5)
        for angle, a in ((0.0, 0.3), (1.0, -0.6), (2.5, 0.85)):
            u = np.array([math.cos(angle), math.sin(angle)])
            upper = cap_weighted_volume(disk, Halfspace(u, a), w, quad)
            lower = cap_weighted_volume(disk, Halfspace(-u, -a), w, quad)
            self.assertAlmostEqual((upper + lower) / total, 1.0, delta=2e-5, msg=f"angle={angle} a={a}")

    def test_cap_mass_decreases_with_offset(self):
        disk = ConvexBodySpec.ball(np.zeros(2), 1.0)
        w = WeightSpec.custom(2, lambda y: 1.0 + np.sum(y * y, axis=1), eta=1.0, label="1+|y|^2")
        quad = QuadratureSpec(method="tensor-grid", points=64)
        u = np.array([0.6, 0.8])
        masses = [cap_weighted_volume(disk, Halfspace(u, a), w, quad) for a in np.linspace(-0.9, 0.9, 10)]
        self.assertTrue(np.all(np.diff(masses) < 0))
        self.assertEqual(cap_weighted_volume(disk, Halfspace(u, 1.5), w, quad), 0.0)

    def test_monte_carlo_cap_tolerance_unachievable(self):
        disk = ConvexBodySpec.ball(np.zeros(2), 1.0)
        quad = QuadratureSpec(method="monte-carlo", samples=200, seed=3, abs_tol=1e-9, rel_tol=1e-9)
        with self.assertRaises(QuadratureError) as ctx:
            cap_weighted_volume(disk, Halfspace(np.array([1.0, 0.0]), 0.0), WeightSpec.constant(2), quad)
        self.assertGreater(ctx.exception.error, 0.0)

    def test_halfspace_normal_must_be_unit(self):
        with self.assertRaises(ValueError):
            Halfspace(np.array([1.0, 1.0]), 0.0)


class TestCapBounds(unittest.TestCase):

    def test_disk_example(self):
        lower, upper = ellipsoid_cap_bounds([1.0, 1.0], 0.5)
        self.assertAlmostEqual(lower, 0.57735, places=5)
        self.assertAlmostEqual(upper, 0.66667, places=5)
        self.assertTrue(lower <= disk_segment(0.5) <= upper)

    def test_cap_exceeds_semi_axis(self):
        with self.assertRaises(GeometryError) as ctx:
            ellipsoid_cap_bounds([1.0, 2.0], 2.5)
        self.assertIn("cap exceeds semi-axis", str(ctx.exception))
        with self.assertRaises(GeometryError):
            ellipsoid_cap_bounds([1.0, 2.0], -0.1)

    def test_random_sandwich(self):
        rng = np.random.Generator(np.random.Philox(11))
        violations = 0
        for _ in range(1000):
            n = int(rng.integers(2, 4))
            axes = rng.uniform(0.5, 3.0, size=n)
            h = float(rng.uniform(0.0, 1.0) * axes[-1])
            body = ConvexBodySpec.ellipsoid(np.zeros(n), axes)
            u = np.zeros((1, n))
            u[0, -1] = 1.0
            vol = float(cap_masses(body, u, np.array([axes[-1] - h]), WeightSpec.constant(n), QuadratureSpec())[0])
            lower, upper = ellipsoid_cap_bounds(axes, h)
            tol = 1e-10 * max(1.0, upper)
            if not (lower - tol <= vol <= upper + tol):
                violations += 1
        self.assertEqual(violations, 0)


class TestPolygons(unittest.TestCase):

    def test_clip_polygon_halves_square(self):
        P = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        Q = clip_polygon(P, np.array([1.0, 0.0]), 0.5)
        self.assertAlmostEqual(polygon_area(Q), 0.5, places=14)

    def test_halfspace_intersection_square_and_cube(self):
        U2 = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        sq = halfspace_intersection(U2, np.full(4, 0.5), 2, (np.full(2, -2.0), np.full(2, 2.0)))
        self.assertAlmostEqual(body_volume(sq), 1.0, places=12)
        U3 = np.vstack([np.eye(3), -np.eye(3)])
        cube = halfspace_intersection(U3, np.full(6, 0.5), 3, (np.full(3, -2.0), np.full(3, 2.0)))
        self.assertEqual(len(cube.vertices), 8)
        self.assertAlmostEqual(body_volume(cube), 1.0, places=10)

    def test_tangent_halfplanes_of_disk_give_regular_polygon(self):
        theta = 2.0 * math.pi * np.arange(64) / 64
        U = np.column_stack([np.cos(theta), np.sin(theta)])
        poly = halfspace_intersection(U, np.ones(64), 2, (np.full(2, -2.0), np.full(2, 2.0)))
        self.assertEqual(len(poly.vertices), 64)
        self.assertTrue(np.allclose(np.linalg.norm(poly.vertices, axis=1), 1.0 / math.cos(math.pi / 64), atol=1e-12))
        self.assertAlmostEqual(body_volume(poly), 64 * math.tan(math.pi / 64), places=12)

    def test_empty_intersection_raises(self):
        U2 = np.array([[1.0, 0.0], [-1.0, 0.0]])
        with self.assertRaises(GeometryError):
            halfspace_intersection(U2, np.array([-0.5, -0.5]), 2, (np.full(2, -2.0), np.full(2, 2.0)))


if __name__ == "__main__":
    unittest.main()
