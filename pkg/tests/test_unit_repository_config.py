import unittest
from unittest.mock import patch

import pytest

from src.repository.config_repo import parse_config, repo_read_config, scenario_from_mapping
from src.services.errors import ConfigParseError, PreconditionError


class TestParseConfig(unittest.TestCase):
    def test_example_scenario(self):
        scenario = parse_config("# displacement MLE\nkind = mle-sim\nm = 3\nN_c = 1.0\nM = 500\ntrials = 3000\nseed = 42\n")
        self.assertEqual(scenario.kind, "mle-sim")
        self.assertEqual(scenario.m, 3)
        self.assertEqual(scenario.N_c, 1.0)
        self.assertEqual(scenario.M, 500)
        self.assertEqual(scenario.trials, 3000)
        self.assertEqual(scenario.seed, 42)
        self.assertEqual(scenario.channel, "displacement")
        self.assertEqual(scenario.eta, 1.0)

    def test_inline_comment_and_blank_lines(self):
        scenario = parse_config("\n\nkind = moments   # only moments\nN_c = 0.5\n\n")
        self.assertEqual(scenario.kind, "moments")
        self.assertEqual(scenario.N_c, 0.5)

    def test_invalid_value_names_key(self):
        with self.assertRaises(ConfigParseError) as exc:
            parse_config("kind = mle-sim\nm = -1\nN_c = 1.0\n")
        self.assertEqual(exc.exception.key, "m")
        self.assertEqual(exc.exception.line_no, 2)
        self.assertIn("`m`", exc.exception.detail)

    def test_empty_file(self):
        with self.assertRaises(ConfigParseError) as exc:
            parse_config("")
        self.assertIn("`kind` required", exc.exception.detail)

    def test_unknown_key(self):
        with self.assertRaises(ConfigParseError) as exc:
            parse_config("kind = moments\nN_c = 0.5\ncolour = red\n")
        self.assertIn("unknown key `colour`", exc.exception.detail)
        self.assertEqual(exc.exception.line_no, 3)

    def test_missing_equals(self):
        with self.assertRaises(ConfigParseError) as exc:
            parse_config("kind = moments\nN_c 0.5\n")
        self.assertEqual(exc.exception.line_no, 2)
        self.assertTrue(exc.exception.detail.startswith("line 2:"))

    def test_duplicate_key(self):
        with self.assertRaises(ConfigParseError) as exc:
            parse_config("kind = moments\nN_c = 0.5\nN_c = 0.6\n")
        self.assertIn("duplicate key `N_c`", exc.exception.detail)

    def test_cross_field_rules(self):
        with self.assertRaises(ConfigParseError):
            parse_config("kind = mle-sim\nm = 2\n")
        with self.assertRaises(ConfigParseError):
            parse_config("kind = loss-sim\nN_c = 0.5\n")
        with self.assertRaises(ConfigParseError):
            parse_config("kind = mle-sim\nN_c = 0.5\nprior_lo = 0.1\n")
        with self.assertRaises(ConfigParseError):
            parse_config("kind = multiparam\nN_c = 0.1\n")


def test_scenario_from_mapping_accepts_numbers():
    scenario = scenario_from_mapping({"kind": "fisher-scan", "channel": "squeezing", "m": 2, "N_s": 0.1})
    assert scenario.strength_key == "N_s"
    assert scenario.strength == 0.1
    assert scenario.prior is None
    assert "prior_lo" not in scenario.echo()


def test_parse_errors_are_validation_failures():
    with pytest.raises(PreconditionError) as exc:
        parse_config("kind = nope\n")
    assert exc.value.exit_code == 2


def test_repo_read_config(scenario_file):
    scenario = repo_read_config(scenario_file)
    assert scenario.m == 3
    assert scenario.seed == 42


def test_repo_read_config_missing_file(tmp_path):
    with pytest.raises(PreconditionError):
        repo_read_config(tmp_path / "absent.txt")


def test_repo_read_config_logs_scenario(scenario_file):
    with patch("src.repository.config_repo.logger") as logger:
        repo_read_config(scenario_file)
    logger.debug.assert_called_once()
