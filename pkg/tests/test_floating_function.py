import math
import unittest
from types import SimpleNamespace
from unittest import mock

import numpy as np
from scipy.optimize import brentq

from src.floatlab.asa_functionals import constant_c
from src.floatlab.errors import GeometryError
from src.floatlab.floating_function import (
    ConvexFunctionSpec,
    cut_mass,
    cut_offset_for_mass,
    deficit_integrals,
    exponential_bound,
    floating_function,
    function_floating_constant,
    modified_rolling,
    modified_rolling_value,
    pointwise_rate,
    rolling_function,
    slope_grid,
    uniform_bound,
)
from src.floatlab.geometry_core import ConvexBodySpec, QuadratureSpec
from src.floatlab.weights import WeightSpec

TIGHT = QuadratureSpec(rel_tol=1e-12)


def parabola(dim=1):
    return ConvexFunctionSpec.quadratic(np.eye(dim))


def quartic():
    return ConvexFunctionSpec.custom(
        1,
        lambda x: x[:, 0] ** 4 / 4.0 + x[:, 0] ** 2 / 2.0,
        lambda x: x ** 3 + x,
        alpha=1.0, beta=0.5, label="quartic")


def raster_offset(psi_values, xs, dx, v, delta):
    """Offset c with sum(max(v x - c - psi, 0)) dx = delta on a fine raster."""
    lifted = v * xs - psi_values

    def excess(c):
        return float(np.sum(np.clip(lifted - c, 0.0, None)) * dx) - delta

    top = float(lifted.max())
    return brentq(excess, top - 10.0, top, xtol=1e-14)


class TestConvexFunctionSpec(unittest.TestCase):

    def test_quadratic_conjugate(self):
        psi = ConvexFunctionSpec.quadratic([[2.0, 0.0], [0.0, 1.0]], b=[1.0, 0.0], c=0.5)
        V = np.array([[3.0, 1.0]])
        X = psi.conjugate_argmin(V)
        self.assertTrue(np.allclose(X, [[1.0, 1.0]]))
        self.assertAlmostEqual(float(psi.conjugate(V)[0]), 4.0 - float(psi.value(X[0])))

    def test_non_integrable_quadratic_is_rejected(self):
        with self.assertRaises(ValueError):
            ConvexFunctionSpec.quadratic([[1.0, 0.0], [0.0, 0.0]])

    def test_piecewise_affine_needs_zero_in_slope_hull(self):
        with self.assertRaises(ValueError):
            ConvexFunctionSpec.piecewise_affine([1.0, 2.0], [0.0, 0.0])
        psi = ConvexFunctionSpec.piecewise_affine([-1.0, 1.0], [0.0, 0.0])
        self.assertAlmostEqual(psi.min_value, 0.0, places=9)

    def test_piecewise_affine_sublevel_box(self):
        psi = ConvexFunctionSpec.piecewise_affine([-1.0, 2.0], [0.0, 0.0])
        lo, hi = psi.sublevel_box(4.0)
        self.assertAlmostEqual(float(lo[0]), -4.0, places=9)
        self.assertAlmostEqual(float(hi[0]), 2.0, places=9)
        with self.assertRaises(GeometryError):
            psi.sublevel_box(-1.0)

    def test_failed_sublevel_solve_is_reported(self):
        psi = ConvexFunctionSpec.piecewise_affine([-1.0, 1.0], [0.0, 0.0])
        psi.min_value
        failed = SimpleNamespace(status=4, message="numerical difficulties", x=None)
        with mock.patch("src.floatlab.floating_function.linprog", return_value=failed):
            with self.assertRaises(GeometryError) as ctx:
                psi.sublevel_box(1.0)
        self.assertIn("numerical difficulties", str(ctx.exception))

    def test_gauge_square_of_disk_is_half_square_norm(self):
        psi = ConvexFunctionSpec.gauge_square(ConvexBodySpec.ball(np.zeros(2), 2.0))
        self.assertAlmostEqual(float(psi.value(np.array([2.0, 0.0]))), 0.5)

    def test_custom_function_must_be_convex(self):
        with self.assertRaises(ValueError):
            ConvexFunctionSpec.custom(1, lambda x: -x[:, 0] ** 2, lambda x: -2 * x)

    def test_numeric_argmin_of_quartic(self):
        psi = quartic()
        X = psi.conjugate_argmin(np.array([[2.0]]))
        self.assertAlmostEqual(float(X[0, 0]), 1.0, places=9)


class TestCuts(unittest.TestCase):

    def test_parabola_cut_has_closed_form_depth(self):
        psi = parabola()
        one = WeightSpec.constant(2)
        delta = 0.01
        c = cut_offset_for_mass(psi, [0.7], one, delta, TIGHT)
        depth = float(psi.conjugate(np.array([[0.7]]))[0]) - c
        self.assertAlmostEqual(depth, (3.0 * delta / (4.0 * math.sqrt(2.0))) ** (2.0 / 3.0), places=11)
        self.assertAlmostEqual(cut_mass(psi, [0.7], c, one, TIGHT), delta, places=12)

    def test_cut_below_the_graph_is_empty(self):
        psi = parabola()
        self.assertEqual(cut_mass(psi, [0.0], 1.0, WeightSpec.constant(2)), 0.0)

    def test_exponential_weight_cut_carries_delta(self):
        psi = parabola()
        w = WeightSpec.exponential_height(2)
        c = cut_offset_for_mass(psi, [1.5], w, 1e-3, TIGHT)
        self.assertAlmostEqual(cut_mass(psi, [1.5], c, w, TIGHT) / 1e-3, 1.0, places=8)

    def test_slope_grid_is_symmetric_for_parabola(self):
        slopes = slope_grid(parabola(), 21, truncation=8.0)
        self.assertEqual(slopes.shape, (21, 1))
        self.assertAlmostEqual(float(slopes[0, 0]), -float(slopes[-1, 0]))
        self.assertAlmostEqual(float(slopes[-1, 0]), 0.95 * 4.0, places=9)


class TestFloatingFunction(unittest.TestCase):

    def test_parabola_gap_is_constant(self):
        psi = parabola()
        delta = 1e-3
        approx = floating_function(psi, WeightSpec.constant(2), delta, np.linspace(-2, 2, 41)[:, None], TIGHT)
        h = constant_c("func_n1", 1) * delta ** (2.0 / 3.0)
        self.assertTrue(np.allclose(approx.gaps, h, rtol=1e-9))
        self.assertTrue(np.allclose(approx.touching[:, 0], np.linspace(-2, 2, 41), atol=1e-12))
        xs = np.linspace(-1.5, 1.5, 13)[:, None]
        self.assertTrue(np.allclose(approx.evaluate(xs), psi.value(xs) + h, rtol=1e-8))

    def test_two_dimensional_parabola_gap(self):
        psi = parabola(2)
        delta = 1e-2
        slopes = np.array([[0.0, 0.0], [0.5, -0.5], [1.0, 0.25]])
        approx = floating_function(psi, WeightSpec.constant(3), delta, slopes, TIGHT, max_workers=2)
        self.assertTrue(np.allclose(approx.gaps, math.sqrt(delta / math.pi), rtol=1e-9))

    def test_quartic_matches_raster_oracle(self):
        psi = quartic()
        delta = 2e-3
        slopes = np.linspace(-3.0, 3.0, 121)[:, None]
        approx = floating_function(psi, WeightSpec.constant(2), delta, slopes, TIGHT)
        dx = 2e-4
        xs = np.arange(-4.0, 4.0, dx) + 0.5 * dx
        psi_values = xs ** 4 / 4.0 + xs ** 2 / 2.0
        for i in range(0, len(slopes), 12):
            c = raster_offset(psi_values, xs, dx, float(slopes[i, 0]), delta)
            self.assertAlmostEqual(float(approx.offsets[i]), c, delta=1e-6)
        points = np.linspace(-0.8, 0.8, 11)[:, None]
        env = approx.envelope(points)
        self.assertTrue(np.all(env >= psi.value(points)))
        self.assertTrue(np.all(approx.evaluate(points) >= env - 1e-12))

    def test_parabola_values_match_raster_envelope(self):
        psi = parabola()
        delta = 1e-3
        approx = floating_function(psi, WeightSpec.constant(2), delta, np.linspace(-3.0, 3.0, 121)[:, None], TIGHT)
        dx = 2e-4
        xs = np.arange(-4.0, 4.0, dx) + 0.5 * dx
        psi_values = xs ** 2 / 2.0
        points = np.linspace(-1.0, 1.0, 11)
        values = approx.evaluate(points[:, None])
        for x, value in zip(points, values):
            local = x + np.linspace(-0.05, 0.05, 11)
            envelope = max(v * x - raster_offset(psi_values, xs, dx, float(v), delta) for v in local)
            self.assertAlmostEqual(float(value), envelope, delta=2e-6, msg=f"x={x}")
        h = constant_c("func_n1", 1) * delta ** (2.0 / 3.0)
        self.assertTrue(np.allclose(values, points ** 2 / 2.0 + h, atol=1e-8))

    def test_larger_delta_floats_higher(self):
        psi = quartic()
        slopes = np.linspace(-2.0, 2.0, 41)[:, None]
        small = floating_function(psi, WeightSpec.constant(2), 1e-3, slopes, TIGHT)
        large = floating_function(psi, WeightSpec.constant(2), 4e-3, slopes, TIGHT)
        self.assertTrue(np.all(large.offsets < small.offsets))
        points = np.linspace(-0.8, 0.8, 17)[:, None]
        self.assertTrue(np.all(large.evaluate(points) >= small.evaluate(points)))

    def test_constant_weight_rescales_delta(self):
        psi = quartic()
        slopes = np.linspace(-2.0, 2.0, 21)[:, None]
        heavy = floating_function(psi, WeightSpec.constant(2, 4.0), 4e-3, slopes, TIGHT)
        unit = floating_function(psi, WeightSpec.constant(2), 1e-3, slopes, TIGHT)
        for a, b in zip(heavy.offsets, unit.offsets):
            self.assertAlmostEqual(float(a), float(b), places=10)

    def test_floating_function_lies_above_and_deficits_are_ordered(self):
        psi = ConvexFunctionSpec.quadratic([[1.0, 0.3], [0.3, 2.0]])
        slopes = slope_grid(psi, 15, truncation=12.0)
        approx = floating_function(psi, WeightSpec.constant(3), 1e-2, slopes, QuadratureSpec(), truncation=12.0)
        pts = np.random.Generator(np.random.Philox(4)).uniform(-1.0, 1.0, (200, 2))
        self.assertTrue(np.all(approx.evaluate(pts) >= psi.value(pts) - 1e-12))
        di = deficit_integrals(psi, approx, truncation=12.0)
        self.assertGreater(di.i_f, 0.0)
        self.assertLessEqual(di.i_f, di.i_psi)

    def test_zero_delta_is_identity(self):
        psi = parabola()
        approx = floating_function(psi, WeightSpec.constant(2), 0.0, np.array([[0.0], [1.0]]))
        self.assertTrue(np.all(approx.gaps == 0.0))
        self.assertEqual(deficit_integrals(psi, approx).i_f, 0.0)

    def test_weight_must_live_one_dimension_up(self):
        with self.assertRaises(ValueError):
            floating_function(parabola(), WeightSpec.constant(1), 0.1, np.array([[0.0]]))


class TestRollingAndBounds(unittest.TestCase):

    def test_rolling_radius_of_parabola_vertex(self):
        self.assertAlmostEqual(rolling_function(parabola(), [0.0]), 1.0, places=4)

    def test_kink_has_zero_rolling_radius(self):
        psi = ConvexFunctionSpec.piecewise_affine([-1.0, 1.0], [0.0, 0.0])
        self.assertEqual(rolling_function(psi, [0.0]), 0.0)
        self.assertEqual(modified_rolling(psi, [0.0]), 0.0)

    def test_modified_rolling_cases(self):
        self.assertEqual(modified_rolling_value(0.5, 2.0), 0.5)
        self.assertEqual(modified_rolling_value(3.0, 2.0), 2.0)
        self.assertEqual(modified_rolling_value(0.5, -2.0), 0.5)
        self.assertEqual(modified_rolling_value(3.0, -2.0), 2.0)

    def test_pointwise_rate_and_bounds(self):
        psi = parabola()
        one = WeightSpec.constant(2)
        rate = pointwise_rate(psi, one, [0.0])
        self.assertAlmostEqual(rate, constant_c("func_n1", 1), places=12)
        for n in (1, 2, 3):
            self.assertEqual(function_floating_constant(n), constant_c("func_n1", n))
        self.assertAlmostEqual(function_floating_constant(1), 0.5 * (3.0 / 2.0) ** (2.0 / 3.0), places=12)
        self.assertGreaterEqual(uniform_bound(psi, [0.0], 1.0, 1.0), rate)
        self.assertEqual(uniform_bound(psi, [0.0], 1.0, 0.0), math.inf)
        self.assertGreaterEqual(exponential_bound(psi, [0.0], 1.0), rate)
        self.assertEqual(exponential_bound(psi, [0.0], 0.0), math.inf)


if __name__ == "__main__":
    unittest.main()
