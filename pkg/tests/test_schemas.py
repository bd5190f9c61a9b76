import json
import unittest

from src.floatlab.errors import ConfigError
from src.floatlab.schemas import parse_config, serialize_config


def disk_config(**extra):
    doc = {"experiment": "eq_floating_body", "body": {"kind": "ball", "dim": 2}}
    doc.update(extra)
    return json.dumps(doc)


class TestParseConfig(unittest.TestCase):

    def test_minimal_config_gets_defaults(self):
        cfg = parse_config(disk_config())
        self.assertEqual(cfg.sweep.k, 5)
        self.assertEqual(cfg.sweep.q, 0.25)
        self.assertTrue(cfg.sweep.relative)
        self.assertEqual(cfg.effective_weight().kind, "constant")

    def test_exponential_experiments_default_to_exponential_weight(self):
        cfg = parse_config(json.dumps({"experiment": "thm_exponential", "function": {"kind": "quadratic"}}))
        self.assertEqual(cfg.effective_weight().kind, "exponential_height")

    def test_errors_carry_dotted_field_names(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(disk_config(sweep={"delta0": -1.0, "k": 2}))
        errors = ctx.exception.errors
        self.assertTrue(any(e.startswith("sweep.delta0: ") for e in errors), errors)
        self.assertTrue(any(e.startswith("sweep.k: ") for e in errors), errors)

    def test_unknown_fields_are_rejected(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(disk_config(deltas=[0.1]))
        self.assertTrue(ctx.exception.errors[0].startswith("deltas: "))

    def test_missing_section(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(json.dumps({"experiment": "thm_weighted"}))
        self.assertIn("needs a function section", str(ctx.exception))

    def test_weight_must_fit_experiment(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(disk_config(weight={"kind": "exponential_height"}))
        self.assertIn("weight kind incompatible with experiment", str(ctx.exception))

    def test_monte_carlo_needs_seed(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(disk_config(quadrature={"method": "monte-carlo"}))
        self.assertIn("seed is required", str(ctx.exception))
        cfg = parse_config(disk_config(quadrature={"method": "monte-carlo"}, seed=3))
        self.assertEqual(cfg.seed, 3)

    def test_body_fields_follow_kind(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(json.dumps({"experiment": "eq_floating_body",
                                     "body": {"kind": "box", "dim": 2, "lo": [-1, -1]}}))
        self.assertIn("box needs hi", str(ctx.exception))
        with self.assertRaises(ConfigError):
            parse_config(json.dumps({"experiment": "eq_floating_body",
                                     "body": {"kind": "ellipsoid", "dim": 2, "semi_axes": [1, 2, 3]}}))

    def test_invalid_json_and_top_level(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("{not json")
        self.assertTrue(ctx.exception.errors[0].startswith("config: invalid JSON"))
        with self.assertRaises(ConfigError):
            parse_config("[1, 2]")

    def test_serialized_config_parses_back(self):
        cfg = parse_config(disk_config(seed=11))
        self.assertEqual(parse_config(serialize_config(cfg)), cfg)


if __name__ == "__main__":
    unittest.main()
