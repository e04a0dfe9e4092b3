# -*- coding: utf-8 -*-
from unittest import TestCase

import pytest

from isac_mimo.exceptions import DomainError
from isac_mimo.oracles import SUITES, OracleCheck, run_suite


class TestOracleCheck(TestCase):
    def test_verdict(self) -> None:
        check = OracleCheck("rate", "sinr", 0.02, 0.03, 2000)
        self.assertTrue(check.passed)
        self.assertTrue(str(check).endswith("(tolerance 3.0e-02, 2000 cases) ok"))
        failed = OracleCheck("rate", "sinr", 0.04, 0.03)
        self.assertFalse(failed.passed)
        self.assertTrue(str(failed).startswith("rate/sinr: worst 4.000e-02"))
        self.assertTrue(str(failed).endswith("FAILED"))


class TestRunSuite(TestCase):
    def test_steering(self) -> None:
        checks = run_suite("steering", seed=3, quick=True)
        self.assertEqual(
            [check.name for check in checks],
            ["direct-formula", "finite-difference", "derivative-identities"],
        )
        for check in checks:
            self.assertTrue(check.passed, str(check))
            self.assertEqual(check.cases, 20)

    def test_fim(self) -> None:
        (check,) = run_suite("fim", quick=True)
        self.assertTrue(check.passed, str(check))

    def test_quick_solver_suites(self) -> None:
        for name in ("socp", "sca"):
            for check in run_suite(name, quick=True):
                self.assertTrue(check.passed, str(check))

    @pytest.mark.slow
    def test_socp(self) -> None:
        checks = run_suite("socp")
        self.assertEqual(
            [check.name for check in checks], ["optimizer-objective", "kkt-residual"]
        )
        for check in checks:
            self.assertTrue(check.passed, str(check))
            self.assertEqual(check.cases, 50)

    @pytest.mark.slow
    def test_sca(self) -> None:
        checks = run_suite("sca")
        names = [check.name for check in checks]
        for policy in ("half_power", "smallest_p0"):
            self.assertIn(f"iterations-{policy}", names)
        for check in checks:
            self.assertTrue(check.passed, str(check))

    def test_seeded(self) -> None:
        first = run_suite("steering", seed=1, quick=True)
        second = run_suite("steering", seed=1, quick=True)
        self.assertEqual(first, second)

    def test_unknown_suite(self) -> None:
        with self.assertRaises(DomainError) as cm:
            run_suite("bogus")
        for name in SUITES:
            self.assertIn(name, str(cm.exception))
