try:
    import unittest2 as unittest
except ImportError:
    import unittest
import json
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor

from .attacks import SweepResult
from .config import parse_config
from .results import (
    BOUNDS_COLUMNS,
    RESULT_COLUMNS,
    MissingResultsError,
    NonFiniteMetricError,
    ResultError,
    ResultSink,
    read_run,
    write_run,
)


CONFIG = parse_config("[experiment]\nkind = sweep\nname = demo\nseed = 5\n")


def _sink():
    return ResultSink(CONFIG.name, CONFIG.config_hash, 5)


def _check(threshold, value, passed):
    return {
        "name": "max_final_median",
        "threshold": threshold,
        "value": value,
        "passed": passed,
    }


class TestResultSink(unittest.TestCase):
    def test_canonical_order(self):
        sink = _sink()
        sink.add("n", 10, "accuracy", 0.3, sample=1)
        sink.add("n", 2, "accuracy", 0.5)
        sink.add("n", 10, "accuracy", 0.1, sample=0)
        sink.add("a", "x", "accuracy", 0.9)
        order = [(r.axis, r.point, r.sample) for r in sink.rows()]
        self.assertEqual(
            order,
            [("a", "x", 0), ("n", "2", 0), ("n", "10", 0), ("n", "10", 1)],
        )

    def test_arrival_order_does_not_matter(self):
        values = [(p, s) for p in range(20) for s in range(5)]
        serial = _sink()
        for p, s in values:
            serial.add("p", p, "accuracy", p / 100, s)
        threaded = _sink()
        def add(value):
            p, s = value
            threaded.add("p", p, "accuracy", p / 100, s)

        with ThreadPoolExecutor(max_workers=4) as pool:
            list(pool.map(add, reversed(values)))
        self.assertEqual(serial.rows(), threaded.rows())

    def test_non_finite(self):
        sink = _sink()
        for value in (float("nan"), float("inf")):
            with self.assertRaises(NonFiniteMetricError):
                sink.add("a", 1, "accuracy", value)
        self.assertTrue(issubclass(NonFiniteMetricError, ResultError))

    def test_summary(self):
        sink = _sink()
        sink.add_samples("n", 1, "accuracy", [0.2, 0.6, 0.4])
        sink.add("n", 1, "baseline", 0.9)
        self.assertEqual(
            sink.summary(),
            {"n": {"1": {"min": 0.2, "median": 0.4, "max": 0.6, "count": 3}}},
        )
        self.assertEqual(sink.summary("baseline")["n"]["1"]["count"], 1)

    def test_add_sweep(self):
        result = SweepResult("key")
        result.add("random", [0.1, 0.2], baseline=0.8, extra=[3, 0])
        sink = _sink()
        sink.add_sweep(result)
        metrics = sorted((r.metric, r.sample, r.value) for r in sink.rows())
        self.assertEqual(
            metrics,
            [
                ("accuracy", 0, 0.1),
                ("accuracy", 1, 0.2),
                ("baseline", 0, 0.8),
                ("matched_digits", 0, 3.0),
                ("matched_digits", 1, 0.0),
            ],
        )


class TestRunFiles(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def _write(self, directory=None, checks=None):
        sink = _sink()
        sink.add_samples("n", 1, "accuracy", [0.25, 0.5])
        sink.add("n", 2, "accuracy", 1 / 3)
        checks = checks or [_check(0.5, 1 / 3, True)]
        bounds = [dict((name, 1.0) for name in BOUNDS_COLUMNS)]
        bounds[0]["n"] = 0
        return write_run(
            directory or self.directory,
            CONFIG,
            sink,
            checks,
            {"note": 1},
            bounds,
        )

    def test_files(self):
        self.assertTrue(self._write())
        names = sorted(os.listdir(self.directory))
        self.assertEqual(
            names, ["bounds.csv", "config.ini", "results.csv", "summary.json"]
        )
        with open(os.path.join(self.directory, "results.csv")) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], ",".join(RESULT_COLUMNS))
        self.assertEqual(
            lines[1], "demo,%s,5,n,1,accuracy,0,0.25" % CONFIG.config_hash
        )
        self.assertTrue(lines[3].endswith(",0.3333333333333333"))
        with open(os.path.join(self.directory, "bounds.csv")) as f:
            bounds = f.read().splitlines()
        self.assertEqual(
            bounds[0], "# config_hash=%s seed=5" % CONFIG.config_hash
        )
        self.assertEqual(bounds[1], ",".join(BOUNDS_COLUMNS))
        with open(os.path.join(self.directory, "config.ini")) as f:
            self.assertEqual(
                parse_config(f.read()).config_hash, CONFIG.config_hash
            )

    def test_failed_check(self):
        failed = [_check(0.1, 0.3, False)]
        self.assertFalse(self._write(checks=failed))
        with open(os.path.join(self.directory, "summary.json")) as f:
            self.assertFalse(json.load(f)["passed"])

    def test_byte_identical_rewrite(self):
        other = tempfile.mkdtemp()
        try:
            self._write()
            self._write(other)
            for name in os.listdir(self.directory):
                with open(os.path.join(self.directory, name), "rb") as a:
                    with open(os.path.join(other, name), "rb") as b:
                        self.assertEqual(a.read(), b.read())
        finally:
            shutil.rmtree(other)

    def test_read_back(self):
        self._write()
        run = read_run(self.directory)
        self.assertEqual(run.summary["experiment"], "demo")
        self.assertEqual(run.summary["extra"], {"note": 1})
        self.assertEqual(len(run.rows), 3)
        self.assertEqual(run.rows[0]["value"], 0.25)
        self.assertEqual(run.rows[1]["sample"], 1)
        self.assertEqual(run.bounds[0]["n"], 0.0)

    def test_missing(self):
        with self.assertRaises(MissingResultsError):
            read_run(self.directory)
        with self.assertRaises(MissingResultsError):
            read_run(os.path.join(self.directory, "absent"))

    def test_corrupt(self):
        self._write()
        with open(os.path.join(self.directory, "summary.json"), "w") as f:
            f.write("{not json")
        with self.assertRaises(MissingResultsError):
            read_run(self.directory)

    def test_corrupt_rows(self):
        self._write()
        path = os.path.join(self.directory, "results.csv")
        with open(path, "a") as f:
            f.write("demo,abc,5,n\n")
        with self.assertRaises(MissingResultsError):
            read_run(self.directory)
