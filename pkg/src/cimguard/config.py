"""
Experiment configuration files.

An experiment is described by an INI file::

    [experiment]
    kind = clone-attack
    seed = 7

    [network]
    preset = cnn-synth
    weight_bits = 4

    [checks]
    min_median_drop = 0.10

Every section and field has a typed default, so a file only lists what it
changes. Unknown sections, unknown fields, values of the wrong type and
checks that do not apply to the experiment kind are reported as
:class:`ConfigError` with the offending field and line.
"""

from __future__ import division

import configparser
from types import SimpleNamespace

from .adc import FLASH, SAR, passrate_presets
from .attacks import sweep_axes
from .bounds import ENUMERATION_LIMIT
from .crossbar import CONVENTIONAL, SUBKERNEL, TILE_ROWS
from .datasets import dataset_ids
from .layers import UnknownPresetError, find_preset
from .util import digest_text


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "KINDS",
    "CHECKS",
    "parse_config",
    "load_config",
]


KINDS = (
    "baseline",
    "offset-sensitivity",
    "retrain",
    "clone-attack",
    "key-attack",
    "sweep",
    "bounds",
    "cost",
)

# acceptance checks each experiment kind understands
CHECKS = {
    "baseline": ("min_accuracy",),
    "offset-sensitivity": ("order_tolerance", "min_median_accuracy"),
    "retrain": ("max_victim_gap",),
    "clone-attack": ("min_median_drop", "max_victim_gap"),
    "key-attack": ("max_median_accuracy",),
    "sweep": (
        "max_final_median",
        "max_first_median",
        "monotone_tolerance",
        "exact_at_full_match",
    ),
    "bounds": (
        "eq1_tolerance",
        "mc_tolerance",
        "mc_beyond_bound",
        "insert_not_weaker",
    ),
    "cost": ("area_min", "area_max", "energy_r2_min", "shallow_cheaper"),
}


class ConfigError(ValueError):
    """
    Invalid experiment configuration.

    :ivar str field: ``section.key`` of the offending value, if known
    :ivar int line: line of the offending value, if known
    """

    def __init__(self, message, field=None, line=None):
        where = ""
        if field is not None:
            where = " [%s]" % field
        if line is not None:
            where += " (line %d)" % line
        super(ConfigError, self).__init__(message + where)
        self.field = field
        self.line = line


def _int_list(text):
    return tuple(int(i) for i in text.split(",") if i.strip())


def _str_list(text):
    return tuple(i.strip() for i in text.split(",") if i.strip())


def _choice(*allowed):
    def parse(text):
        if text not in allowed:
            raise ValueError("expected one of %s" % ", ".join(allowed))
        return text

    return parse


def _auto_or(parse, words=("auto", "all")):
    def parse_auto(text):
        if text in words:
            return text
        return parse(text)

    return parse_auto


def _render(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, tuple):
        return ",".join(str(i) for i in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# section -> ordered (field, parser, default)
SCHEMA = (
    (
        "experiment",
        (
            ("kind", _choice(*KINDS), None),
            ("name", str, ""),
            ("seed", int, 0),
            ("workers", int, 1),
        ),
    ),
    (
        "dataset",
        (
            ("id", _choice(*dataset_ids()), "synthetic"),
            ("path", str, ""),
            ("train_samples", int, 0),
            ("test_samples", int, 0),
        ),
    ),
    (
        "network",
        (
            ("preset", str, "cnn-synth"),
            ("weight_bits", int, 8),
            ("epochs", int, 5),
            ("learning_rate", float, 0.05),
            ("batch_size", int, 32),
            ("mapping", _choice(CONVENTIONAL, SUBKERNEL), CONVENTIONAL),
            ("model", str, ""),
        ),
    ),
    (
        "adc",
        (
            ("kind", _choice(FLASH, SAR), SAR),
            ("bits", int, 5),
            ("preset", str, "WL5"),
            ("curve", str, ""),
            ("rows", _auto_or(int, ("auto",)), "auto"),
        ),
    ),
    (
        "population",
        (
            ("size", int, 10),
            ("victim", int, 0),
            ("retrain_epochs", int, 1),
            ("retrain_learning_rate", float, 0.005),
        ),
    ),
    (
        "keys",
        (
            ("layers", _auto_or(_int_list), "auto"),
            ("zeros", int, 0),
            ("bit_planes", _auto_or(int), "all"),
            ("trials", int, 20),
            ("axis", _choice(*sweep_axes), sweep_axes[0]),
            ("matches", _auto_or(_int_list), "auto"),
            ("readout", _choice("exact", "adc"), "exact"),
        ),
    ),
    (
        "offsets",
        (
            ("kinds", _str_list, (FLASH, SAR)),
            ("presets", _str_list, ("WL4", "WL5", "WL6")),
            ("weight_bits", _int_list, (2, 4, 8)),
        ),
    ),
    (
        "bounds",
        (
            ("n", int, 128),
            ("zeros", int, 16),
            ("max_matches", int, 20),
            ("trials", int, 100000),
            ("enumerate_max", int, 7),
        ),
    ),
    (
        "cost",
        (
            ("weight_bits", int, 2),
            ("sharing", int, 1),
            ("layers", _auto_or(_int_list), "auto"),
            ("bit_planes", _auto_or(int), "all"),
            ("table", str, ""),
        ),
    ),
)

_schema = dict((section, fields) for section, fields in SCHEMA)


def _line_index(text):
    """Map (section, key) to the line it is set on."""
    lines = {}
    section = None
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            lines[(section, None)] = number
            continue
        for sep in ("=", ":"):
            if sep in line:
                key = line.split(sep, 1)[0].strip().lower()
                lines[(section, key)] = number
                break
    return lines


class ExperimentConfig(object):
    """
    A parsed and validated experiment configuration.

    Sections are attributes holding their fields, for example
    ``config.network.weight_bits``; ``config.checks`` maps check names to
    thresholds.
    """

    def __init__(self, values, checks, source=None):
        self.values = values
        self.checks = dict(checks)
        self.source = source
        for section, fields in values.items():
            setattr(self, section, SimpleNamespace(**fields))

    def __repr__(self):
        return "ExperimentConfig({0}, {1})".format(
            self.experiment.kind, self.name
        )

    @property
    def name(self):
        return self.experiment.name or self.experiment.kind

    def resolved_text(self):
        """Every field, defaults included, as canonical INI text."""
        out = []
        for section, fields in SCHEMA:
            out.append("[%s]" % section)
            for key, _, _ in fields:
                value = _render(self.values[section][key])
                out.append("%s = %s" % (key, value))
            out.append("")
        out.append("[checks]")
        for key in sorted(self.checks):
            out.append("%s = %s" % (key, _render(self.checks[key])))
        out.append("")
        return "\n".join(out)

    @property
    def config_hash(self):
        return digest_text(self.resolved_text())

    def network_spec(self):
        return find_preset(self.network.preset).with_weight_bits(
            self.network.weight_bits
        )


def parse_config(text, source=None):
    """
    Parse and validate configuration text.

    :raises ConfigError: anything that does not fit the schema

    :rtype: ExperimentConfig
    """
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as e:
        raise ConfigError("malformed configuration: %s" % e)

    values = dict(
        (section, dict((key, default) for key, _, default in fields))
        for section, fields in SCHEMA
    )
    checks = {}
    for section in parser.sections():
        if section == "checks":
            for key, text_value in parser.items(section):
                line = lines.get((section, key))
                try:
                    checks[key] = float(text_value)
                except ValueError:
                    raise ConfigError(
                        "check threshold must be a number",
                        "checks." + key,
                        line,
                    )
            continue
        if section not in _schema:
            raise ConfigError(
                "unknown section", section, lines.get((section, None))
            )
        parsers = dict((key, parse) for key, parse, _ in _schema[section])
        for key, text_value in parser.items(section):
            field = "%s.%s" % (section, key)
            line = lines.get((section, key))
            if key not in parsers:
                raise ConfigError("unknown field", field, line)
            try:
                values[section][key] = parsers[key](text_value.strip())
            except ValueError as e:
                raise ConfigError(
                    "invalid value %r: %s" % (text_value, e), field, line
                )
    config = ExperimentConfig(values, checks, source)
    _validate(config, lines)
    return config


def _validate(config, lines):
    def fail(message, section, key):
        raise ConfigError(
            message, "%s.%s" % (section, key), lines.get((section, key))
        )

    if config.experiment.kind is None:
        fail("experiment kind is required", "experiment", "kind")
    try:
        net = find_preset(config.network.preset)
    except UnknownPresetError as e:
        fail(str(e), "network", "preset")
    if config.dataset.id not in ("synthetic", net.dataset):
        fail(
            "network %s expects dataset %s" % (net.name, net.dataset),
            "dataset",
            "id",
        )
    if not 2 <= config.network.weight_bits <= 8:
        fail("weight bits must be between 2 and 8", "network", "weight_bits")
    if config.network.epochs < 0:
        fail("epochs must not be negative", "network", "epochs")
    if config.network.batch_size < 1:
        fail("batch size must be positive", "network", "batch_size")
    if not 1 <= config.adc.bits <= 8:
        fail("ADC bits must be between 1 and 8", "adc", "bits")
    if config.adc.rows != "auto" and not 1 <= config.adc.rows <= TILE_ROWS:
        fail("a read drives 1 to %d rows" % TILE_ROWS, "adc", "rows")
    if not config.adc.curve and config.adc.preset not in passrate_presets:
        fail("unknown pass rate preset", "adc", "preset")
    for label in config.offsets.presets:
        if label not in passrate_presets:
            fail("unknown pass rate preset %r" % label, "offsets", "presets")
    for kind in config.offsets.kinds:
        if kind not in (FLASH, SAR):
            fail("unknown ADC kind %r" % kind, "offsets", "kinds")
    for bits in config.offsets.weight_bits:
        if not 2 <= bits <= 8:
            fail(
                "weight bits must be between 2 and 8", "offsets", "weight_bits"
            )
    if config.population.size < 1:
        fail("population needs at least one chip", "population", "size")
    if not 0 <= config.population.victim < config.population.size:
        fail("victim outside the population", "population", "victim")
    for section in ("keys", "cost"):
        chosen = getattr(config, section).layers
        if chosen != "auto":
            for index in chosen:
                if not 0 <= index < len(net.layers):
                    fail(
                        "no layer %d in %s" % (index, net.name),
                        section,
                        "layers",
                    )
    if config.cost.layers != "auto":
        for index in config.cost.layers:
            if index not in net.shuffle_candidates():
                fail(
                    "layer %d of %s cannot be shuffled" % (index, net.name),
                    "cost",
                    "layers",
                )
    if config.keys.zeros < 0:
        fail("zero count must not be negative", "keys", "zeros")
    if config.keys.trials < 1:
        fail("at least one trial is needed", "keys", "trials")
    bounds = config.bounds
    if bounds.n < 2:
        fail("need at least two channels", "bounds", "n")
    if not 0 <= bounds.max_matches <= bounds.n:
        fail("max_matches must lie in [0, n]", "bounds", "max_matches")
    if bounds.trials < 1000:
        fail("Monte-Carlo needs at least 1000 trials", "bounds", "trials")
    if bounds.zeros < 0:
        fail("zero count must not be negative", "bounds", "zeros")
    if not 1 <= bounds.enumerate_max <= ENUMERATION_LIMIT:
        fail(
            "enumerate_max must lie in [1, %d]" % ENUMERATION_LIMIT,
            "bounds",
            "enumerate_max",
        )
    if config.cost.sharing < 1:
        fail("sharing factor must be at least 1", "cost", "sharing")
    if (
        "exact_at_full_match" in config.checks
        and config.keys.axis != "matched-digits"
    ):
        fail("needs the matched-digits axis", "checks", "exact_at_full_match")
    allowed = CHECKS[config.experiment.kind]
    for name in config.checks:
        if name not in allowed:
            fail(
                "check does not apply to %s experiments (known: %s)"
                % (config.experiment.kind, ", ".join(allowed)),
                "checks",
                name,
            )


def load_config(path):
    """Read and parse a configuration file."""
    try:
        with open(path) as f:
            text = f.read()
    except (IOError, OSError) as e:
        raise ConfigError("cannot read configuration: %s" % e)
    return parse_config(text, path)
