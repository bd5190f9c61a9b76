import math
import os
import unittest

import numpy as np

from src.floatlab.asa_functionals import constant_c
from src.floatlab.convergence_lab import (
    SweepExperiment,
    SweepPoint,
    body_experiment,
    delta_grid,
    delta_sweep,
    disk_closed_form_ratio,
    extrapolate,
    function_experiment,
    is_monotone,
    random_polytope_constant,
    random_polytope_deficit,
    random_polytope_target,
    run_convergence,
    sconcave_experiment,
    theorem_verdict,
)
from src.floatlab.errors import GeometryError, SweepError
from src.floatlab.floating_function import ConvexFunctionSpec
from src.floatlab.geometry_core import ConvexBodySpec
from src.floatlab.sconcave_lift import SConcaveFunctionSpec
from src.floatlab.weights import WeightSpec

SLOW = os.getenv("FLOATLAB_SLOW") == "1"
DELTAS = 1e-2 * 0.25 ** np.arange(5)


def toy_experiment(deficit, target=1.0, exponent=1.0):
    return SweepExperiment("eq_floating_body", "toy", exponent, deficit, lambda: target)


class TestExtrapolation(unittest.TestCase):

    def test_constant_sequence(self):
        fit = extrapolate(DELTAS, np.full(5, 3.25))
        self.assertEqual(fit.limit, 3.25)
        self.assertEqual(fit.slope, 0.0)
        self.assertTrue(math.isnan(fit.beta))

    def test_recovers_square_root_correction(self):
        fit = extrapolate(DELTAS, 2.0 + DELTAS ** 0.5)
        self.assertAlmostEqual(fit.limit, 2.0, places=8)
        self.assertAlmostEqual(fit.beta, 0.5, places=4)
        self.assertAlmostEqual(fit.slope, 1.0, places=4)

    def test_grid_of_synthetic_sequences(self):
        for L in (1.0, 2.0, 3.0):
            for a in (-1.0, 0.5, 2.0):
                for beta in (0.5, 1.0, 1.5):
                    fit = extrapolate(DELTAS, L + a * DELTAS ** beta)
                    self.assertAlmostEqual(fit.limit, L, places=6, msg=f"L={L} a={a} beta={beta}")

    def test_needs_three_points(self):
        with self.assertRaises(ValueError):
            extrapolate(DELTAS[:2], [1.0, 1.1])

    def test_delta_grid_validation(self):
        self.assertTrue(np.allclose(delta_grid(1e-2, 0.5, 3), [1e-2, 5e-3, 2.5e-3]))
        for args in ((0.0, 0.5, 3), (1e-2, 1.5, 3), (1e-2, 0.5, 2)):
            with self.assertRaises(ValueError):
                delta_grid(*args)


class TestVerdicts(unittest.TestCase):

    def test_no_data(self):
        with self.assertRaises(ValueError) as ctx:
            theorem_verdict(toy_experiment(lambda d, q: (d, 0.0)), [])
        self.assertIn("no data", str(ctx.exception))

    def test_exact_sequence_passes(self):
        report = run_convergence(toy_experiment(lambda d, q: (d + d * d, 0.0)), relative=False)
        self.assertTrue(report.passed)
        self.assertTrue(report.monotone)
        self.assertAlmostEqual(report.limit, 1.0, places=8)
        self.assertEqual(len(report.points), 5)
        self.assertEqual(report.budgets["k"], 5)

    def test_wrong_target_fails(self):
        report = run_convergence(toy_experiment(lambda d, q: (2 * d, 0.0), target=1.0), relative=False)
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.relative_error, 1.0)

    def test_monotonicity(self):
        good = [SweepPoint(delta=d, deficit=d, ratio=1.0, ratio_err=0.0) for d in DELTAS]
        self.assertTrue(is_monotone(good, 1.0))
        bad = [SweepPoint(delta=d, deficit=1.0 / d, ratio=1.0, ratio_err=0.0) for d in DELTAS]
        self.assertFalse(is_monotone(bad, 1.0))

    def test_failure_keeps_partial_points(self):
        def deficit(d, q):
            if d < 1e-3:
                raise GeometryError("delta unreachable for slope")
            return d, 0.0

        with self.assertRaises(SweepError) as ctx:
            delta_sweep(toy_experiment(deficit), relative=False, max_workers=3)
        self.assertEqual(len(ctx.exception.partial), 2)
        self.assertIn("delta unreachable", str(ctx.exception))


class TestClosedForms(unittest.TestCase):

    def test_disk_closed_form_limit(self):
        ratios = [disk_closed_form_ratio(d) for d in DELTAS]
        fit = extrapolate(DELTAS, ratios)
        target = constant_c("body_n", 2) * 2 * math.pi
        self.assertAlmostEqual(fit.limit / target, 1.0, delta=1e-4)
        with self.assertRaises(GeometryError):
            disk_closed_form_ratio(2.0)

    def test_random_polytope_constant_in_the_plane(self):
        factor = random_polytope_constant(2) / constant_c("body_n", 2)
        self.assertAlmostEqual(factor, 8 * 5 * math.gamma(5.0 / 3.0) / 30.0, places=12)
        self.assertAlmostEqual(factor, 1.2036, places=4)

    def test_random_polytope_deficit_is_seeded(self):
        disk = ConvexBodySpec.ball(np.zeros(2), 1.0)
        a = random_polytope_deficit(disk, 60, 12, seed=7, max_workers=1)
        b = random_polytope_deficit(disk, 60, 12, seed=7, max_workers=4)
        self.assertEqual(a, b)
        self.assertGreater(a[0], 0.0)
        self.assertGreater(a[1], 0.0)
        with self.assertRaises(ValueError):
            random_polytope_deficit(disk, 2, 12, seed=7)


class TestTheorems(unittest.TestCase):

    def test_floating_disk(self):
        exp = body_experiment(ConvexBodySpec.ball(np.zeros(2), 1.0), directions=2048)
        report = run_convergence(exp, 1e-2, 0.25, 5, tolerance=0.01, relative=False)
        self.assertEqual(report.experiment, "eq_floating_body")
        self.assertAlmostEqual(report.target, constant_c("body_n", 2) * 2 * math.pi, places=6)
        self.assertTrue(report.passed, report.relative_error)
        for p in report.points:
            self.assertAlmostEqual(p.ratio, disk_closed_form_ratio(p.delta), delta=5e-5)

    def test_weighted_function_constant_weight(self):
        psi = ConvexFunctionSpec.quadratic(np.eye(1))
        base = constant_c("func_n1", 1) * math.sqrt(2 * math.pi)
        for eta in (1.0, 4.0):
            exp = function_experiment(psi, WeightSpec.constant(2, eta))
            self.assertEqual(exp.tag, "thm_weighted")
            report = run_convergence(exp, 1e-2, 0.25, 5, tolerance=0.02, relative=False)
            self.assertAlmostEqual(report.target, base * eta ** (-2.0 / 3.0), places=6)
            self.assertTrue(report.passed, report.relative_error)

    def test_exponential_weight_in_one_dimension(self):
        psi = ConvexFunctionSpec.quadratic(np.eye(1))
        exp = function_experiment(psi, WeightSpec.exponential_height(2))
        self.assertEqual(exp.tag, "thm_exponential")
        self.assertAlmostEqual(exp.mass_scale, math.sqrt(2 * math.pi), places=8)
        report = run_convergence(exp, 1e-2, 0.25, 5, tolerance=0.02, relative=True)
        self.assertAlmostEqual(report.target, constant_c("func_n1", 1) * math.sqrt(6 * math.pi), places=6)
        self.assertTrue(report.passed, report.relative_error)

    def test_weighted_l1_statistic(self):
        psi = ConvexFunctionSpec.quadratic(np.eye(1))
        exp = function_experiment(psi, WeightSpec.constant(2), statistic="weighted_l1")
        self.assertEqual(exp.tag, "prop_weighted")
        report = run_convergence(exp, 1e-2, 0.25, 5, tolerance=0.02, relative=False)
        self.assertTrue(report.passed, report.relative_error)

    def test_sconcave_parabolic_cap(self):
        f = SConcaveFunctionSpec.poly_cap(1, 1)
        exp = sconcave_experiment(f, directions=1024)
        report = run_convergence(exp, 1e-2, 0.25, 5, tolerance=0.02, relative=False)
        self.assertAlmostEqual(report.target, constant_c("sconcave_ns", 1, 1) * 2.0 ** (4.0 / 3.0), places=6)
        self.assertTrue(report.passed, report.relative_error)

    @unittest.skipUnless(SLOW, "set FLOATLAB_SLOW=1 to run")
    def test_exponential_weight_in_two_dimensions(self):
        psi = ConvexFunctionSpec.quadratic(np.eye(2))
        exp = function_experiment(psi, WeightSpec.exponential_height(3), per_axis=41)
        report = run_convergence(exp, 1e-2, 0.25, 5, tolerance=0.02, relative=True, max_workers=4)
        self.assertAlmostEqual(report.target, constant_c("func_n1", 2) * 4 * math.pi, places=6)
        self.assertTrue(report.passed, report.relative_error)

    @unittest.skipUnless(SLOW, "set FLOATLAB_SLOW=1 to run")
    def test_random_polytopes_in_the_disk(self):
        disk = ConvexBodySpec.ball(np.zeros(2), 1.0)
        estimate, half = random_polytope_deficit(disk, 1000, 200, seed=20240601, max_workers=4)
        target = random_polytope_target(disk)
        self.assertAlmostEqual(estimate / target, 1.0, delta=0.05)
        self.assertLess(half / estimate, 0.05)


if __name__ == "__main__":
    unittest.main()
