# -*- coding: utf-8 -*-
import json
import math
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase

from isac_mimo.allocation import InitPolicy, Method
from isac_mimo.exceptions import ScenarioError
from isac_mimo.geometry import Angles, UpaSpec
from isac_mimo.precoding import Scheme
from isac_mimo.scenarios import (
    SCENARIO_KEYS,
    ScenarioKind,
    SweepAxis,
    keys_help,
    load_scenario,
    parse_scenario,
    scenario_settings,
)

SCENARIOS_DIR = Path(__file__).resolve().parent.parent / "scenarios"

SNR_SWEEP = """
# transmit SNR sweep
id = snr-sweep
sweep_axis = snr
sweep_values = 0, 10, 20   # dB
schemes = MRT, ZF
methods = Proposed, EqualCS
large_scale_sets = 2
small_scale_draws = 50
tx = 6x6
K = 4
"""


class TestParseScenario(TestCase):
    def test_parse(self) -> None:
        scenario = parse_scenario(SNR_SWEEP)
        self.assertEqual(scenario.id, "snr-sweep")
        self.assertIs(scenario.kind, ScenarioKind.SWEEP)
        self.assertIs(scenario.sweep_axis, SweepAxis.SNR)
        self.assertEqual(scenario.sweep_values, (0.0, 10.0, 20.0))
        self.assertEqual(scenario.schemes, (Scheme.MRT, Scheme.ZF))
        self.assertEqual(scenario.methods, (Method.PROPOSED, Method.EQUAL_CS))
        self.assertEqual(scenario.large_scale_sets, 2)
        self.assertEqual(scenario.system.tx, UpaSpec(6, 6))
        self.assertEqual(scenario.system.K, 4)
        self.assertEqual(scenario.system.rx, UpaSpec(5, 5))
        self.assertIs(scenario.init_policy, InitPolicy.SMALLEST_P0)

    def test_default_id(self) -> None:
        self.assertEqual(parse_scenario("K = 2", default_id="x").id, "x")

    def test_system_keys(self) -> None:
        scenario = parse_scenario(
            "snr_db = 20\nsensing_snr_db = 10\ntarget_theta_deg = 30\nseed = 9"
        )
        system = scenario.system
        self.assertAlmostEqual(system.P_t, 100.0)
        self.assertAlmostEqual(system.sensing_snr, 10.0)
        self.assertAlmostEqual(system.target.theta, math.radians(30.0))
        self.assertAlmostEqual(system.target.phi, math.pi / 4)
        self.assertEqual(system.seed, 9)

    def check_error(self, text: str, line: int, fragment: str) -> None:
        with self.assertRaises(ScenarioError) as cm:
            parse_scenario(text, path="bad.conf")
        self.assertEqual(cm.exception.line, line)
        self.assertEqual(cm.exception.path, "bad.conf")
        self.assertIn(fragment, str(cm.exception))
        self.assertTrue(str(cm.exception).startswith(f"bad.conf:{line}: "))

    def test_unknown_key(self) -> None:
        self.check_error("K = 4\n\nbogus = 1\n", 3, "unknown key 'bogus'")

    def test_duplicate_key(self) -> None:
        self.check_error("K = 4\nL = 10\nK = 5\n", 3, "first set on line 1")

    def test_missing_equals(self) -> None:
        self.check_error("# comment\nK 4\n", 2, "expected 'key = value'")

    def test_bad_value(self) -> None:
        self.check_error("K = four\n", 1, "bad value for K")
        self.check_error("schemes = MRT, MMSE\n", 1, "bad value for schemes")
        self.check_error("tx = 5by5\n", 1, "bad value for tx")

    def test_exclusive_keys(self) -> None:
        self.check_error("P_t = 10\nK = 2\nsnr_db = 10\n", 3, "cannot both be set")

    def test_invalid_scenario(self) -> None:
        cases = [
            "sweep_values = 10, 0",
            "large_scale_sets = 0",
            "tx = 2x2\nK = 4\nschemes = ZF",
            "sweep_axis = n_t\nsweep_values = 100, 150",
            "tau_p = 200",
        ]
        for text in cases:
            with self.assertRaises(ScenarioError) as cm:
                parse_scenario(text, path="bad.conf")
            self.assertIsNone(cm.exception.line)
            self.assertTrue(str(cm.exception).startswith("bad.conf: "))


class TestScenario(TestCase):
    def test_snr_axis(self) -> None:
        scenario = parse_scenario(SNR_SWEEP)
        self.assertAlmostEqual(scenario.system_at(20.0).P_t, 100.0)
        self.assertEqual(scenario.beam_at(20.0), scenario.system.target)

    def test_crlb_axis(self) -> None:
        scenario = parse_scenario(
            "sweep_axis = crlb_threshold\nsweep_values = -40, -30\ncrlb_phi_db = -20"
        )
        sca = scenario.sca_at(-40.0)
        self.assertAlmostEqual(sca.crlb_theta_max, 1e-4)
        self.assertAlmostEqual(sca.crlb_phi_max, 1e-4)

    def test_array_axis(self) -> None:
        scenario = parse_scenario("sweep_axis = n_t\nsweep_values = 100, 144")
        self.assertEqual(scenario.system_at(144.0).tx, UpaSpec(12, 12))

    def test_pointing_error_axis(self) -> None:
        scenario = parse_scenario(
            "sweep_axis = pointing_error\nsweep_values = 0, 5\nmethods = EqualCS"
        )
        target = scenario.system.target
        self.assertEqual(scenario.beam_at(0.0), target)
        self.assertEqual(scenario.beam_at(5.0), target.offset(math.radians(5.0)))
        self.assertIsInstance(scenario.beam_at(5.0), Angles)

    def test_settings_are_json(self) -> None:
        settings = scenario_settings(parse_scenario(SNR_SWEEP))
        decoded = json.loads(json.dumps(settings))
        self.assertEqual(decoded["schemes"], ["MRT", "ZF"])
        self.assertEqual(decoded["tx"], "6x6")
        self.assertEqual(decoded["sweep_axis"], "snr")

    def test_keys_help(self) -> None:
        lines = keys_help()
        self.assertEqual(len(lines), len(SCENARIO_KEYS))
        self.assertTrue(any(line.startswith("sweep_axis: ") for line in lines))


class TestLoadScenario(TestCase):
    def test_shipped_scenarios(self) -> None:
        paths = sorted(SCENARIOS_DIR.glob("*.conf"))
        self.assertTrue(paths)
        for path in paths:
            scenario = load_scenario(path)
            self.assertEqual(scenario.id, path.stem)

    def test_missing_file(self) -> None:
        with TemporaryDirectory() as tmp:
            with self.assertRaises(ScenarioError) as cm:
                load_scenario(Path(tmp) / "missing.conf")
            self.assertIn("cannot read scenario", str(cm.exception))

    def test_line_numbers_name_the_file(self) -> None:
        with TemporaryDirectory() as tmp:
            path = Path(tmp) / "typo.conf"
            path.write_text("K = 4\nschemes = MRT\nmethds = EqualCS\n")
            with self.assertRaises(ScenarioError) as cm:
                load_scenario(path)
            self.assertEqual(str(cm.exception), f"{path}:3: unknown key 'methds'")
