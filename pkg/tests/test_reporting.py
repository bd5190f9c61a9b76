import json
import os
import tempfile
import unittest

import pandas as pd
from jsonschema import ValidationError

from src.floatlab.convergence_lab import ConvergenceReport, SweepPoint
from src.floatlab.reporting import CSV_COLUMNS, emit_report, summary_document


def sample_report(points=True):
    deltas = [1e-2, 2.5e-3, 6.25e-4, 1.5625e-4, 3.90625e-5]
    pts = [SweepPoint(delta=d, deficit=4.0 * d ** (2 / 3) * (1 + d), ratio=4.0 * (1 + d), ratio_err=1e-9)
           for d in deltas] if points else []
    return ConvergenceReport(
        experiment="eq_floating_body", label="ball", exponent=2 / 3, points=pts,
        limit=4.0, slope=4.0, beta=1.0, residual=0.0, target=4.1, relative_error=0.0244,
        uncertainty=0.0, tolerance=0.01, passed=False, wall_clock=1.5, budgets={"k": 5})


class TestReporting(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _read(self, path):
        with open(path, "rb") as f:
            return f.read()

    def test_writes_every_format(self):
        paths = emit_report(sample_report(), ["csv", "json", "svg"], self.tmp.name, "disk")
        self.assertEqual(set(paths), {"csv", "json", "svg"})
        df = pd.read_csv(paths["csv"])
        self.assertEqual(list(df.columns), CSV_COLUMNS)
        self.assertEqual(len(df), 5)
        with open(paths["json"], encoding="utf-8") as f:
            doc = json.load(f)
        self.assertEqual(doc["points"], 5)
        self.assertFalse(doc["passed"])
        self.assertNotIn("wall_clock", doc)
        self.assertTrue(paths["svg"].endswith("disk.svg"))

    def test_outputs_are_byte_stable(self):
        first = emit_report(sample_report(), ["csv", "json", "svg"], os.path.join(self.tmp.name, "a"))
        second = emit_report(sample_report(), ["csv", "json", "svg"], os.path.join(self.tmp.name, "b"))
        for fmt in ("csv", "json", "svg"):
            self.assertEqual(self._read(first[fmt]), self._read(second[fmt]), fmt)

    def test_empty_report_has_no_data(self):
        with self.assertRaises(ValueError) as ctx:
            emit_report(sample_report(points=False), ["csv"], self.tmp.name)
        self.assertIn("no data", str(ctx.exception))

    def test_unknown_format(self):
        with self.assertRaises(ValueError) as ctx:
            emit_report(sample_report(), ["csv", "pdf"], self.tmp.name)
        self.assertIn("pdf", str(ctx.exception))
        self.assertFalse(os.path.exists(os.path.join(self.tmp.name, "report.csv")))

    def test_summary_is_validated(self):
        report = sample_report()
        self.assertEqual(summary_document(report)["experiment"], "eq_floating_body")
        bad = report.model_copy(update={"budgets": [1, 2]})
        with self.assertRaises(ValidationError):
            summary_document(bad)


if __name__ == "__main__":
    unittest.main()
