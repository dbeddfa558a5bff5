try:
    import unittest2 as unittest
except ImportError:
    import unittest
import os
import tempfile

import pytest

from .config import CHECKS, KINDS, ConfigError, load_config, parse_config


MINIMAL = "[experiment]\nkind = bounds\n"


class TestParse(unittest.TestCase):
    def test_defaults(self):
        config = parse_config(MINIMAL)
        self.assertEqual(config.experiment.kind, "bounds")
        self.assertEqual(config.name, "bounds")
        self.assertEqual(config.network.preset, "cnn-synth")
        self.assertEqual(config.adc.bits, 5)
        self.assertEqual(config.offsets.presets, ("WL4", "WL5", "WL6"))
        self.assertEqual(config.keys.layers, "auto")
        self.assertEqual(config.adc.rows, "auto")
        self.assertEqual(config.checks, {})

    def test_values(self):
        config = parse_config(
            "[experiment]\nkind = sweep\nname = planes\nseed = 7\n"
            "[keys]\nlayers = 1\nbit_planes = 2\naxis = bit-planes\n"
            "[network]\nweight_bits = 4\n"
            "[checks]\nmonotone_tolerance = 0.05\n"
        )
        self.assertEqual(config.name, "planes")
        self.assertEqual(config.experiment.seed, 7)
        self.assertEqual(config.keys.layers, (1,))
        self.assertEqual(config.keys.bit_planes, 2)
        self.assertEqual(config.checks, {"monotone_tolerance": 0.05})
        net = config.network_spec()
        self.assertEqual(net.layers[0].weight_bits, 4)

    def test_rows_per_read(self):
        config = parse_config(MINIMAL + "[adc]\nrows = 31\n")
        self.assertEqual(config.adc.rows, 31)

    def test_comments_and_case(self):
        config = parse_config(
            "# experiment\n[experiment]\nKIND = cost\n; note\nseed: 3\n"
        )
        self.assertEqual(config.experiment.kind, "cost")
        self.assertEqual(config.experiment.seed, 3)


class TestErrors(unittest.TestCase):
    def assertConfigError(self, text, field, line=None):
        with self.assertRaises(ConfigError) as e:
            parse_config(text)
        self.assertEqual(e.exception.field, field)
        if line is not None:
            self.assertEqual(e.exception.line, line)
        self.assertIn(field, str(e.exception))
        return e.exception

    def test_kind_required(self):
        self.assertConfigError(
            "[network]\nweight_bits = 4\n", "experiment.kind"
        )

    def test_unknown_kind(self):
        self.assertConfigError(
            "[experiment]\nkind = magic\n", "experiment.kind", 2
        )

    def test_unknown_field(self):
        self.assertConfigError(MINIMAL + "\n[adc]\nbitz = 4\n", "adc.bitz", 5)

    def test_unknown_section(self):
        self.assertConfigError(MINIMAL + "[gpu]\ncount = 1\n", "gpu", 3)

    def test_wrong_type(self):
        error = self.assertConfigError(
            MINIMAL + "[network]\nweight_bits = many\n",
            "network.weight_bits",
            4,
        )
        self.assertIn("line 4", str(error))

    def test_ranges(self):
        cases = [
            ("[network]\nweight_bits = 9\n", "network.weight_bits"),
            ("[adc]\nbits = 0\n", "adc.bits"),
            ("[adc]\npreset = WL9\n", "adc.preset"),
            ("[network]\npreset = resnet\n", "network.preset"),
            ("[population]\nsize = 3\nvictim = 3\n", "population.victim"),
            ("[keys]\nlayers = 1,9\n", "keys.layers"),
            ("[bounds]\ntrials = 999\n", "bounds.trials"),
            ("[bounds]\nmax_matches = 200\n", "bounds.max_matches"),
            ("[bounds]\nenumerate_max = 11\n", "bounds.enumerate_max"),
            ("[bounds]\nenumerate_max = 0\n", "bounds.enumerate_max"),
            ("[bounds]\nzeros = -1\n", "bounds.zeros"),
            ("[adc]\nrows = 0\n", "adc.rows"),
            ("[adc]\nrows = 129\n", "adc.rows"),
            ("[adc]\nrows = all\n", "adc.rows"),
            ("[cost]\nsharing = 0\n", "cost.sharing"),
            ("[cost]\nlayers = 0\n", "cost.layers"),
            ("[cost]\nlayers = 2\n", "cost.layers"),
            ("[offsets]\nkinds = flash,pipeline\n", "offsets.kinds"),
            ("[dataset]\nid = mnist\n", "dataset.id"),
        ]
        for text, field in cases:
            self.assertConfigError(MINIMAL + text, field)

    def test_bounds_ranges_name_the_line(self):
        self.assertConfigError(
            MINIMAL + "[bounds]\nenumerate_max = 12\n",
            "bounds.enumerate_max",
            4,
        )
        self.assertConfigError(
            MINIMAL + "[bounds]\nn = 64\nzeros = -3\n", "bounds.zeros", 5
        )

    def test_check_for_other_kind(self):
        error = self.assertConfigError(
            MINIMAL + "[checks]\nmin_accuracy = 0.9\n",
            "checks.min_accuracy",
            4,
        )
        self.assertIn("eq1_tolerance", str(error))

    def test_check_not_a_number(self):
        self.assertConfigError(
            MINIMAL + "[checks]\neq1_tolerance = tight\n",
            "checks.eq1_tolerance",
        )

    def test_full_match_check_needs_matched_digits(self):
        text = (
            "[experiment]\nkind = sweep\n"
            "[checks]\nexact_at_full_match = 0\n"
        )
        self.assertConfigError(text, "checks.exact_at_full_match")
        keys = "[keys]\naxis = matched-digits\n[checks]"
        parse_config(text.replace("[checks]", keys))

    def test_malformed(self):
        with self.assertRaises(ConfigError):
            parse_config("kind = bounds\n")
        with self.assertRaises(ConfigError):
            parse_config(MINIMAL + "[experiment]\nseed = 1\n")

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(os.path.join(tempfile.gettempdir(), "no-such.ini"))

    def test_is_value_error(self):
        self.assertTrue(issubclass(ConfigError, ValueError))


class TestHash(unittest.TestCase):
    def test_defaults_hash_like_explicit_values(self):
        explicit = parse_config(MINIMAL + "[bounds]\nn = 128\nzeros = 16\n")
        self.assertEqual(
            parse_config(MINIMAL).config_hash, explicit.config_hash
        )

    def test_changes_with_values(self):
        other = parse_config(MINIMAL + "[bounds]\nn = 64\n")
        self.assertNotEqual(
            parse_config(MINIMAL).config_hash, other.config_hash
        )

    def test_resolved_text_parses_back(self):
        config = parse_config(
            "[experiment]\nkind = cost\nseed = 4\n[cost]\nlayers = 1\n"
            "[checks]\narea_max = 70\n"
        )
        again = parse_config(config.resolved_text())
        self.assertEqual(again.resolved_text(), config.resolved_text())
        self.assertEqual(again.config_hash, config.config_hash)

    def test_load(self):
        fd, path = tempfile.mkstemp(suffix=".ini")
        os.close(fd)
        try:
            with open(path, "w") as f:
                f.write(MINIMAL)
            config = load_config(path)
            self.assertEqual(config.source, path)
        finally:
            os.remove(path)


@pytest.mark.parametrize("kind", KINDS)
def test_every_kind_parses_with_its_checks(kind):
    checks = "".join("%s = 0.5\n" % name for name in CHECKS[kind])
    text = "[experiment]\nkind = %s\n" % kind
    if "exact_at_full_match" in CHECKS[kind]:
        text += "[keys]\naxis = matched-digits\n"
    config = parse_config(text + "[checks]\n" + checks)
    assert sorted(config.checks) == sorted(CHECKS[kind])


SHIPPED = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "..", "..", "experiments"
)
SHIPPED_FILES = (
    sorted(n for n in os.listdir(SHIPPED) if n.endswith(".ini"))
    if os.path.isdir(SHIPPED)
    else []
)


@pytest.mark.skipif(not SHIPPED_FILES, reason="no experiments directory")
@pytest.mark.parametrize("name", SHIPPED_FILES)
def test_shipped_experiments_parse(name):
    config = load_config(os.path.join(SHIPPED, name))
    assert config.name == os.path.splitext(name)[0]
    assert config.checks
    assert set(config.checks) <= set(CHECKS[config.experiment.kind])


def test_shipped_experiments_cover_every_kind():
    if not SHIPPED_FILES:
        pytest.skip("no experiments directory")
    kinds = set(
        load_config(os.path.join(SHIPPED, name)).experiment.kind
        for name in SHIPPED_FILES
    )
    assert kinds == set(KINDS)
