# -*- coding: utf-8 -*-
import os
from contextlib import redirect_stderr, redirect_stdout
from io import StringIO
from pathlib import Path
from tempfile import TemporaryDirectory
from typing import List, Tuple
from unittest import TestCase, mock
from uuid import UUID

import pandas as pd

from isac_mimo.cli import (
    EXIT_FAILED,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_SCENARIO,
    main,
)
from isac_mimo.experiments import CSV_HEADER, read_json
from isac_mimo.recorders import DjangoResultRecorder
from tests.test_recorders import DjangoTestCase

SCENARIOS_DIR = Path(__file__).resolve().parent.parent / "scenarios"

SMALL = """
sweep_values = 10
schemes = MRT
methods = EqualCS
large_scale_sets = 2
small_scale_draws = 10
tx = 4x4
rx = 3x3
K = 2
"""


def invoke(argv: List[str]) -> Tuple[int, str, str]:
    out, err = StringIO(), StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class CliTestCase(TestCase):
    def setUp(self) -> None:
        self.tmp = TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        return path


class TestValidate(CliTestCase):
    def test_shipped_scenarios(self) -> None:
        for path in SCENARIOS_DIR.glob("*.conf"):
            code, out, _ = invoke(["validate", str(path)])
            self.assertEqual(code, EXIT_OK)
            self.assertIn(": ok (", out)

    def test_bad_scenario(self) -> None:
        path = self.write("bad.conf", "K = 2\nschemes = MRT, MMSE\n")
        code, _, err = invoke(["validate", str(path)])
        self.assertEqual(code, EXIT_SCENARIO)
        self.assertIn(f"{path}:2: bad value for schemes", err)

    def test_missing_scenario(self) -> None:
        code, _, err = invoke(["validate", str(self.dir / "missing.conf")])
        self.assertEqual(code, EXIT_SCENARIO)
        self.assertIn("cannot read scenario", err)


class TestRun(CliTestCase):
    def test_csv(self) -> None:
        config = self.write("small.conf", SMALL)
        out_dir = self.dir / "out"
        code, out, _ = invoke(["run", str(config), "--out-dir", str(out_dir)])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("small: 2 rows, 0 infeasible", out)
        rows = out_dir / "small.csv"
        self.assertEqual(rows.read_text().splitlines()[0], CSV_HEADER)
        self.assertEqual(len(pd.read_csv(rows)), 2)
        self.assertEqual(len(pd.read_csv(out_dir / "small-aggregate.csv")), 1)

    def test_json_and_seed(self) -> None:
        config = self.write("small.conf", SMALL)
        args = ["run", str(config), "--out-dir", str(self.dir), "--format", "json"]
        self.assertEqual(invoke(args + ["--seed", "5"])[0], EXIT_OK)
        first = read_json(self.dir / "small.json")
        self.assertEqual(invoke(args + ["--seed", "5", "--threads", "2"])[0], EXIT_OK)
        second = read_json(self.dir / "small.json")
        self.assertEqual(
            [row.sum_rate for row in first], [row.sum_rate for row in second]
        )
        (mean,) = read_json(self.dir / "small-aggregate.json")
        self.assertIsNone(mean.large_scale_set)

    def test_all_infeasible(self) -> None:
        text = SMALL.replace("EqualCS", "Proposed") + "crlb_theta_db = -150\n"
        config = self.write("tight.conf", text)
        code, out, _ = invoke(["run", str(config), "--out-dir", str(self.dir)])
        self.assertEqual(code, EXIT_INFEASIBLE)
        self.assertIn("2 infeasible", out)
        self.assertTrue((self.dir / "tight.csv").exists())

    def test_convergence(self) -> None:
        config = self.write(
            "trace.conf",
            "kind = convergence\nschemes = ZF\nlarge_scale_sets = 1\ntx = 6x6\n"
            "rx = 3x3\nK = 3\nmax_iters = 3\ncrlb_theta_db = -30\ncrlb_phi_db = -30\n",
        )
        code, out, _ = invoke(["run", str(config), "--out-dir", str(self.dir)])
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(self.dir / "trace-convergence.csv")
        self.assertEqual(set(frame["init_policy"]), {"half_power", "smallest_p0"})
        self.assertIn("iteration rows written", out)

    def test_unwritable_output(self) -> None:
        config = self.write("small.conf", SMALL)
        blocker = self.write("blocker", "")
        code, _, err = invoke(["run", str(config), "--out-dir", str(blocker)])
        self.assertEqual(code, EXIT_FAILED)
        self.assertIn("error:", err)

    def test_record_needs_django(self) -> None:
        config = self.write("small.conf", SMALL)
        with mock.patch.dict(os.environ):
            os.environ.pop("DJANGO_SETTINGS_MODULE", None)
            code, _, err = invoke(
                ["run", str(config), "--out-dir", str(self.dir), "--record"]
            )
        self.assertEqual(code, EXIT_SCENARIO)
        self.assertIn("DJANGO_SETTINGS_MODULE", err)


class TestRecord(DjangoTestCase):
    def test_record(self) -> None:
        with TemporaryDirectory() as tmp:
            config = Path(tmp) / "small.conf"
            config.write_text(SMALL)
            code, out, _ = invoke(["run", str(config), "--out-dir", tmp, "--record"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("(2 rows projected)", out)
        run_id = UUID(out.split("recorded run ")[1].split(" ")[0])
        rows = DjangoResultRecorder().select_rows(run_id)
        self.assertEqual([row["large_scale_set"] for row in rows], [0, 1])


class TestOracle(CliTestCase):
    def test_steering(self) -> None:
        code, out, _ = invoke(["oracle", "steering", "--quick", "--seed", "2"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("all 3 checks passed", out)

    def test_unknown_suite(self) -> None:
        with redirect_stderr(StringIO()):
            with self.assertRaises(SystemExit) as cm:
                main(["oracle", "bogus"])
        self.assertEqual(cm.exception.code, 2)
