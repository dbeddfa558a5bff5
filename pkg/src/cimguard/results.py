"""
Result files of an experiment run.

A run directory holds:

* ``results.csv``: long format, one row per (axis, point, metric,
  sample), columns :data:`RESULT_COLUMNS`
* ``bounds.csv``: for ``bounds`` runs only, columns :data:`BOUNDS_COLUMNS`
* ``summary.json``: per-point min/median/max and the acceptance checks
* ``config.ini``: the resolved configuration the run used

Every file carries the configuration hash and the master seed, and rows
are written in canonical order, so a rerun from ``config.ini`` reproduces
the files byte for byte.
"""

from __future__ import division

import csv
import io
import json
import math
import os
import threading
from dataclasses import dataclass

import numpy as np

from .util import natural_key


__all__ = [
    "ResultError",
    "MissingResultsError",
    "NonFiniteMetricError",
    "RESULT_COLUMNS",
    "BOUNDS_COLUMNS",
    "ResultRow",
    "ResultSink",
    "write_run",
    "read_run",
]


RESULTS_FILE = "results.csv"
BOUNDS_FILE = "bounds.csv"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.ini"

RESULT_COLUMNS = (
    "experiment",
    "config_hash",
    "seed",
    "axis",
    "point",
    "metric",
    "sample",
    "value",
)
BOUNDS_COLUMNS = ("n", "eq1_bound", "eq2_bound", "exact_prob", "mc_freq")


class ResultError(Exception):
    """Base class for result file problems."""

    pass


class MissingResultsError(ResultError):
    """Raised when a run directory lacks result files or they are corrupt."""

    pass


class NonFiniteMetricError(ResultError, ValueError):
    """Raised when an experiment produces a NaN or infinite metric."""

    pass


def _format(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass(frozen=True)
class ResultRow(object):
    experiment: str
    config_hash: str
    seed: int
    axis: str
    point: str
    metric: str
    sample: int
    value: float

    def sort_key(self):
        return (
            self.axis,
            natural_key(self.point),
            self.metric,
            self.sample,
        )

    def fields(self):
        return [_format(getattr(self, name)) for name in RESULT_COLUMNS]


class ResultSink(object):
    """
    Collects result rows from concurrent experiment workers.

    Appends are serialised; :meth:`rows` returns them in canonical order
    whatever order they arrived in.
    """

    def __init__(self, experiment, config_hash, seed):
        self.experiment = experiment
        self.config_hash = config_hash
        self.seed = seed
        self._rows = []
        self._lock = threading.Lock()

    def add(self, axis, point, metric, value, sample=0):
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteMetricError(
                "{0} at {1}={2} is {3!r}".format(metric, axis, point, value)
            )
        row = ResultRow(
            self.experiment,
            self.config_hash,
            self.seed,
            str(axis),
            str(point),
            metric,
            int(sample),
            value,
        )
        with self._lock:
            self._rows.append(row)

    def add_samples(self, axis, point, metric, values):
        for sample, value in enumerate(values):
            self.add(axis, point, metric, value, sample)

    def add_sweep(self, result, metric="accuracy"):
        """Every sample, baseline and side metric of a SweepResult."""
        for point in result.points:
            self.add_samples(result.axis, point, metric, result.samples[point])
            if point in result.baseline:
                self.add(
                    result.axis, point, "baseline", result.baseline[point]
                )
            if point in result.extra:
                self.add_samples(
                    result.axis, point, "matched_digits", result.extra[point]
                )

    def rows(self):
        with self._lock:
            return sorted(self._rows, key=ResultRow.sort_key)

    def summary(self, metric="accuracy"):
        """axis -> point -> min/median/max/count of one metric."""
        grouped = {}
        for row in self.rows():
            if row.metric != metric:
                continue
            grouped.setdefault(row.axis, {}).setdefault(row.point, []).append(
                row.value
            )
        out = {}
        for axis, points in grouped.items():
            out[axis] = dict(
                (
                    point,
                    {
                        "min": float(np.min(values)),
                        "median": float(np.median(values)),
                        "max": float(np.max(values)),
                        "count": len(values),
                    },
                )
                for point, values in points.items()
            )
        return out


def _header(config_hash, seed):
    return "# config_hash={0} seed={1}\n".format(config_hash, seed)


def results_csv(rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow(row.fields())
    return out.getvalue()


def bounds_csv(bounds_rows, config_hash, seed):
    out = io.StringIO()
    out.write(_header(config_hash, seed))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BOUNDS_COLUMNS)
    for record in bounds_rows:
        writer.writerow([_format(record[name]) for name in BOUNDS_COLUMNS])
    return out.getvalue()


def write_run(directory, config, sink, checks, extra=None, bounds_rows=None):
    """
    Write the result files of one run.

    :param config: the :class:`~cimguard.config.ExperimentConfig` run
    :param sink: the :class:`ResultSink` holding the rows
    :param checks: list of check outcome dicts (name, threshold, value,
        passed)
    :param dict extra: further JSON-serialisable summary entries
    :param bounds_rows: dicts keyed by :data:`BOUNDS_COLUMNS`

    :return: True when every check passed
    """
    os.makedirs(directory, exist_ok=True)
    passed = all(c["passed"] for c in checks)
    summary = {
        "experiment": sink.experiment,
        "kind": config.experiment.kind,
        "config_hash": sink.config_hash,
        "seed": sink.seed,
        "points": sink.summary(),
        "checks": checks,
        "passed": passed,
    }
    if extra:
        summary["extra"] = extra
    files = {
        RESULTS_FILE: results_csv(sink.rows()),
        SUMMARY_FILE: json.dumps(summary, indent=2, sort_keys=True) + "\n",
        CONFIG_FILE: _header(sink.config_hash, sink.seed)
        + config.resolved_text(),
    }
    if bounds_rows is not None:
        files[BOUNDS_FILE] = bounds_csv(
            bounds_rows, sink.config_hash, sink.seed
        )
    for name, text in sorted(files.items()):
        with open(os.path.join(directory, name), "w", newline="") as f:
            f.write(text)
    return passed


@dataclass
class RunResults(object):
    directory: str
    summary: dict
    rows: list
    bounds: list


def _read_rows(path, columns):
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise MissingResultsError("%s is empty" % path)
    if tuple(header) != columns:
        raise MissingResultsError(
            "{0}: unexpected columns {1}".format(path, header)
        )
    rows = []
    for lineno, fields in enumerate(reader, 2):
        if len(fields) != len(columns):
            raise MissingResultsError(
                "{0}:{1}: expected {2} fields".format(
                    path, lineno, len(columns)
                )
            )
        rows.append(dict(zip(columns, fields)))
    return rows


def read_run(directory):
    """
    Load the result files of a run directory.

    :raises MissingResultsError: no results, or corrupt ones

    :rtype: RunResults
    """
    summary_path = os.path.join(directory, SUMMARY_FILE)
    results_path = os.path.join(directory, RESULTS_FILE)
    if not os.path.isdir(directory):
        raise MissingResultsError(
            "no results: %s is not a directory" % directory
        )
    if not os.path.exists(summary_path) or not os.path.exists(results_path):
        raise MissingResultsError("no results in %s" % directory)
    try:
        with open(summary_path) as f:
            summary = json.load(f)
    except ValueError as e:
        raise MissingResultsError("corrupt %s: %s" % (summary_path, e))
    for name in ("experiment", "kind", "config_hash", "seed", "points"):
        if name not in summary:
            raise MissingResultsError("%s lacks %r" % (summary_path, name))
    rows = _read_rows(results_path, RESULT_COLUMNS)
    for row in rows:
        try:
            row["value"] = float(row["value"])
            row["sample"] = int(row["sample"])
        except ValueError:
            raise MissingResultsError("corrupt row in %s" % results_path)
    bounds = []
    bounds_path = os.path.join(directory, BOUNDS_FILE)
    if os.path.exists(bounds_path):
        for record in _read_rows(bounds_path, BOUNDS_COLUMNS):
            try:
                bounds.append(
                    dict((k, float(v)) for k, v in record.items())
                )
            except ValueError:
                raise MissingResultsError("corrupt row in %s" % bounds_path)
    return RunResults(directory, summary, rows, bounds)
