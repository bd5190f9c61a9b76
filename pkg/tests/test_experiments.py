import json
import math
import os
import tempfile
import unittest
from unittest import mock

from src.floatlab.asa_functionals import asa_exponential
from src.floatlab.cli import EXIT_NUMERICAL, EXIT_OK, main
from src.floatlab.config import Settings
from src.floatlab.experiments import (
    build_body,
    build_experiment,
    build_function,
    run_asa,
    run_float_func,
    run_randpoly,
    run_sconcave,
)
from src.floatlab.convergence_lab import random_polytope_target
from src.floatlab.schemas import parse_config

SETTINGS = Settings(max_workers=1)


def function_config(experiment, relative=True):
    return parse_config(json.dumps({
        "experiment": experiment,
        "function": {"kind": "quadratic", "dim": 1},
        "grid": {"slopes_per_axis": 21},
        "sweep": {"delta0": 0.01, "relative": relative},
    }))


def randpoly_config(**extra):
    doc = {"experiment": "random_polytope", "body": {"kind": "ball", "dim": 2}, "seed": 3,
           "random_polytope": {"N": 100, "trials": 4}}
    doc.update(extra)
    return doc


class TestSingleDelta(unittest.TestCase):

    def test_float_func_uses_the_sweep_scale(self):
        cfg = function_config("thm_exponential")
        approx, _ = run_float_func(cfg, SETTINGS)
        scale = build_experiment(cfg, SETTINGS).mass_scale
        self.assertAlmostEqual(scale, math.sqrt(2 * math.pi), places=8)
        self.assertAlmostEqual(approx.delta, 0.01 * scale, places=12)

    def test_absolute_delta_and_constant_weight(self):
        approx, _ = run_float_func(function_config("thm_exponential", relative=False), SETTINGS)
        self.assertEqual(approx.delta, 0.01)
        cfg = function_config("thm_weighted")
        approx, _ = run_float_func(cfg, SETTINGS)
        self.assertEqual(approx.delta, 0.01 * build_experiment(cfg, SETTINGS).mass_scale)

    def test_explicit_delta_wins(self):
        approx, _ = run_float_func(function_config("thm_exponential"), SETTINGS, delta=0.003)
        self.assertEqual(approx.delta, 0.003)

    def test_sconcave_uses_the_sweep_scale(self):
        cfg = parse_config(json.dumps({"experiment": "thm_sconcave", "sconcave": {"n": 1, "s": 1},
                                       "grid": {"directions": 64}, "sweep": {"delta0": 0.01}}))
        approx, deficit = run_sconcave(cfg, SETTINGS)
        self.assertEqual(approx.delta, 0.01 * build_experiment(cfg, SETTINGS).mass_scale)
        self.assertGreater(deficit, 0.0)


class TestAffineSurfaceAreas(unittest.TestCase):

    def test_functionals_ignore_the_quadrature_method(self):
        doc = {"experiment": "thm_exponential", "function": {"kind": "quadratic", "dim": 1}, "seed": 3}
        base = run_asa(parse_config(json.dumps(doc)))
        doc["quadrature"] = {"method": "monte-carlo", "samples": 10}
        mc = run_asa(parse_config(json.dumps(doc)))
        self.assertEqual([r.value for r in base], [r.value for r in mc])
        psi = build_function(parse_config(json.dumps(doc)).function)
        self.assertEqual(base[0].functional, "as_phi_e")
        self.assertEqual(base[0].value, asa_exponential(psi, 40.0).value)
        self.assertAlmostEqual(base[0].value, math.sqrt(6 * math.pi), places=8)


class TestRandomPolytopeVerdict(unittest.TestCase):

    def setUp(self):
        self.target = random_polytope_target(build_body(parse_config(json.dumps(randpoly_config())).body))

    def _run(self, ratio, **extra):
        cfg = parse_config(json.dumps(randpoly_config(**extra)))
        with mock.patch("src.floatlab.experiments.random_polytope_deficit",
                        return_value=(ratio * self.target, 0.02 * self.target)):
            return run_randpoly(cfg, SETTINGS, progress=False)

    def test_five_percent_off_passes_by_default(self):
        summary = self._run(1.05)
        self.assertAlmostEqual(summary["relative_error"], 0.05)
        self.assertEqual(summary["tolerance"], 0.10)
        self.assertTrue(summary["passed"])

    def test_tolerance_is_configurable(self):
        self.assertFalse(self._run(1.15)["passed"])
        tight = randpoly_config()
        tight["random_polytope"]["tolerance"] = 0.01
        self.assertFalse(self._run(1.05, random_polytope=tight["random_polytope"])["passed"])

    def test_cli_exit_codes_follow_the_verdict(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "cfg.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump(randpoly_config(), f)
            for ratio, code in ((1.05, EXIT_OK), (1.2, EXIT_NUMERICAL)):
                with mock.patch("src.floatlab.experiments.random_polytope_deficit",
                                return_value=(ratio * self.target, 0.01)):
                    self.assertEqual(main(["randpoly", "--config", path, "--out", tmp]), code)


if __name__ == "__main__":
    unittest.main()
