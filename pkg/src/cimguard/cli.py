"""
Command line front end.

    cimguard run experiment.ini [--output DIR]
    cimguard report DIR
    cimguard list-presets

``run`` exits with 0 when every acceptance check declared in the
configuration passes, 1 when one fails and 2 on errors.
"""

from __future__ import division, print_function

import argparse
import logging
import os
import sys

from .adc import passrate_presets
from .attacks import ExperimentError, sweep_axes
from .config import CHECKS, KINDS, ConfigError, load_config
from .datasets import DatasetError, dataset_ids
from .experiments import run_experiment
from .hwcost import CostModel
from .layers import presets
from .modelfile import ModelFileError
from .results import ResultError, read_run
from .training import TrainingDivergedError


__all__ = ["main", "format_report"]


logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

point_form = (
    "{axis:>14} {point:>14} {count:>6} {min:>9{form}} {median:>9{form}} "
    "{max:>9{form}}"
)
bounds_form = (
    "{n:>4} {eq1_bound:>12{form}} {eq2_bound:>12{form}} "
    "{exact_prob:>12{form}} {mc_freq:>12{form}}"
)
cost_form = (
    "{location:>10} {area:>9{form}} {energy:>9{form}} {latency:>9{form}}"
)


def _points_table(summary):
    lines = [
        point_form.format(
            axis="axis",
            point="point",
            count="n",
            min="min",
            median="median",
            max="max",
            form="",
        )
    ]
    for axis in sorted(summary["points"]):
        points = summary["points"][axis]
        for point in points:
            stats = points[point]
            lines.append(
                point_form.format(axis=axis, point=point, form=".4f", **stats)
            )
    return lines


def _clone_table(run):
    points = run.summary["points"].get("chip", {})
    if "victim" not in points or "clone" not in points:
        return []
    clone = points["clone"]
    return [
        "victim chip accuracy: {0:.4f}".format(points["victim"]["median"]),
        "other chips ({count}): min {min:.4f} median {median:.4f} "
        "max {max:.4f}".format(**clone),
    ]


def _bounds_table(run):
    if not run.bounds:
        return []
    lines = [
        bounds_form.format(
            n="n",
            eq1_bound="no insert",
            eq2_bound="inserted",
            exact_prob="exact",
            mc_freq="monte-carlo",
            form="",
        )
    ]
    for record in run.bounds:
        values = dict(record)
        values["n"] = int(values["n"])
        lines.append(bounds_form.format(form=".4e", **values))
    return lines


def _cost_table(run):
    overheads = {}
    for row in run.rows:
        if row["axis"] in ("location", "total"):
            where = row["point"]
            overheads.setdefault(where, {})[row["metric"]] = row["value"]
    if not overheads:
        return []
    lines = [
        cost_form.format(
            location="shuffled",
            area="area %",
            energy="energy %",
            latency="latency %",
            form="",
        )
    ]
    for where in sorted(overheads, key=lambda p: (p == "all", p)):
        values = overheads[where]
        lines.append(
            cost_form.format(
                location="layer " + where if where != "all" else "all",
                area=values.get("area", 0.0),
                energy=values.get("energy", 0.0),
                latency=values.get("latency", 0.0),
                form=".2f",
            )
        )
    return lines


def _checks_table(summary):
    lines = []
    for check in summary.get("checks", []):
        lines.append(
            "check {name}: {value:.6g} (threshold {threshold:.6g}) "
            "{verdict}".format(
                verdict="pass" if check["passed"] else "FAIL", **check
            )
        )
    return lines


def format_report(directory):
    """
    Human-readable summary of one run directory.

    :raises MissingResultsError: the directory holds no results
    """
    run = read_run(directory)
    summary = run.summary
    kind = summary["kind"]
    lines = [
        "{0} ({1})".format(summary["experiment"], kind),
        "config {0}, seed {1}".format(summary["config_hash"], summary["seed"]),
        "",
    ]
    if kind == "clone-attack":
        lines += _clone_table(run) + [""]
    if kind == "bounds":
        lines += _bounds_table(run) + [""]
    if kind == "cost":
        lines += _cost_table(run) + [""]
    else:
        lines += _points_table(summary) + [""]
    extra = summary.get("extra", {})
    if "rram_area" in extra:
        lines.append(
            "RRAM tile area: stated {stated:.3f}, component sum "
            "{component_sum:.3f}".format(**extra["rram_area"])
        )
    lines += _checks_table(summary)
    if "passed" in summary:
        lines.append("result: " + ("PASS" if summary["passed"] else "FAIL"))
    return "\n".join(lines)


def list_presets():
    lines = ["networks:"]
    for net in presets:
        lines.append(
            "  {0:<12} {1:<10} input {2}, {3} layers".format(
                net.name, net.dataset, net.input_shape, len(net.layers)
            )
        )
    lines.append("pass rate presets:")
    for label in sorted(passrate_presets):
        first, last = passrate_presets[label]
        lines.append(
            "  {0:<6} {1:.3f} (first level) .. {2:.3f} (last level)".format(
                label, first, last
            )
        )
    lines.append("datasets: " + ", ".join(dataset_ids()))
    lines.append("sweep axes: " + ", ".join(sweep_axes))
    lines.append("experiment kinds and their checks:")
    for kind in KINDS:
        lines.append("  {0:<20} {1}".format(kind, ", ".join(CHECKS[kind])))
    lines.append("cost components:")
    for name in sorted(CostModel.from_table().records):
        lines.append("  " + name)
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cimguard",
        description="Security experiments on simulated eNVM "
        "compute-in-memory accelerators.",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="log progress (-v) or details (-vv)",
    )
    verbs = parser.add_subparsers(dest="verb")
    verbs.required = True
    run = verbs.add_parser("run", help="run the experiment of a config file")
    run.add_argument("config", help="experiment configuration (INI)")
    run.add_argument(
        "-o",
        "--output",
        default=None,
        help="result directory, results/<experiment name> by default",
    )
    report = verbs.add_parser("report", help="summarise a result directory")
    report.add_argument("directory")
    verbs.add_parser("list-presets", help="show the built-in presets")
    return parser


def _configure_logging(verbosity):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _run(args):
    config = load_config(args.config)
    directory = args.output or os.path.join("results", config.name)
    outcome = run_experiment(config, directory)
    print(format_report(directory))
    return EXIT_PASS if outcome.passed else EXIT_FAIL


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        if args.verb == "run":
            return _run(args)
        if args.verb == "report":
            print(format_report(args.directory))
            return EXIT_PASS
        print(list_presets())
        return EXIT_PASS
    except (
        ConfigError,
        DatasetError,
        ExperimentError,
        ModelFileError,
        ResultError,
        TrainingDivergedError,
    ) as e:
        print("cimguard: error: %s" % e, file=sys.stderr)
        return EXIT_ERROR
