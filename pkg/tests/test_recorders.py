# -*- coding: utf-8 -*-
from __future__ import annotations

import math
import os
from typing import TYPE_CHECKING
from uuid import uuid4

from django.test import TransactionTestCase
from eventsourcing.persistence import IntegrityError
from eventsourcing.tests.test_postgres import pg_close_all_connections

from isac_mimo.application import Experiments
from isac_mimo.experiments import row_to_record
from isac_mimo.projection import ResultsProjection
from isac_mimo.recorders import DjangoResultRecorder, journal_modes
from tests.test_experiments import infeasible_row, make_row

if TYPE_CHECKING:
    from typing import Any, Dict, List, Optional


class DjangoTestCase(TransactionTestCase):
    reset_sequences = True

    def tearDown(self) -> None:
        journal_modes.clear()
        super().tearDown()


def records() -> List[Dict[str, Any]]:
    return [
        row_to_record(make_row(large_scale_set=0, sum_rate=1 / 3)),
        row_to_record(infeasible_row(large_scale_set=1)),
        row_to_record(make_row(large_scale_set=None, scheme="ZF")),
    ]


class TestDjangoResultRecorder(DjangoTestCase):
    db_alias: Optional[str] = None

    def setUp(self) -> None:
        super().setUp()
        self.recorder = DjangoResultRecorder(using=self.db_alias)
        self.run_id = uuid4()

    def test_insert_select(self) -> None:
        self.assertEqual(self.recorder.select_rows(self.run_id), [])
        self.assertEqual(self.recorder.max_tracking_position(self.run_id), 0)

        self.recorder.insert_rows(self.run_id, records(), tracking_position=0)
        self.assertEqual(self.recorder.max_tracking_position(self.run_id), 3)

        first, failed, mean = self.recorder.select_rows(self.run_id)
        self.assertEqual(first["sum_rate"], 0.333333333333)
        self.assertEqual(first["per_user_rates"], [1.0, 3.0])
        self.assertEqual(first["large_scale_set"], 0)
        self.assertTrue(first["feasible"])

        self.assertFalse(failed["feasible"])
        self.assertTrue(math.isnan(failed["sum_rate"]))
        self.assertTrue(math.isnan(failed["crlb_theta_db"]))
        self.assertEqual(failed["iterations"], 0.0)
        self.assertTrue(all(math.isnan(r) for r in failed["per_user_rates"]))

        self.assertIsNone(mean["large_scale_set"])
        self.assertEqual(mean["scheme"], "ZF")

    def test_append(self) -> None:
        rows = records()
        self.recorder.insert_rows(self.run_id, rows[:1], tracking_position=0)
        self.recorder.insert_rows(self.run_id, rows[1:], tracking_position=1)
        selected = self.recorder.select_rows(self.run_id)
        self.assertEqual(
            [row["large_scale_set"] for row in selected],
            [row["large_scale_set"] for row in rows],
        )
        self.assertEqual(self.recorder.max_tracking_position(self.run_id), 3)

    def test_position_conflict(self) -> None:
        rows = records()
        self.recorder.insert_rows(self.run_id, rows, tracking_position=0)
        with self.assertRaises(IntegrityError):
            self.recorder.insert_rows(self.run_id, rows[:1], tracking_position=1)
        with self.assertRaises(IntegrityError):
            self.recorder.insert_rows(self.run_id, rows[:1], tracking_position=0)
        self.assertEqual(len(self.recorder.select_rows(self.run_id)), 3)
        self.assertEqual(self.recorder.max_tracking_position(self.run_id), 3)

    def test_runs_are_separate(self) -> None:
        other = uuid4()
        self.recorder.insert_rows(self.run_id, records(), tracking_position=0)
        self.recorder.insert_rows(other, records()[:1], tracking_position=0)
        self.assertEqual(len(self.recorder.select_rows(self.run_id)), 3)
        self.assertEqual(len(self.recorder.select_rows(other)), 1)
        self.assertEqual(self.recorder.max_tracking_position(other), 1)


class TestResultsProjection(DjangoTestCase):
    db_alias: Optional[str] = None

    def setUp(self) -> None:
        super().setUp()
        self.app = Experiments()
        self.projection = ResultsProjection(DjangoResultRecorder(using=self.db_alias))
        self.run_id = self.app.start_run("snr", 0, {})

    def test_project(self) -> None:
        rows = records()
        self.app.record_rows(self.run_id, rows[:2])
        self.assertEqual(self.projection.project(self.app, self.run_id), 2)
        self.assertEqual(self.projection.project(self.app, self.run_id), 0)

        self.app.record_rows(self.run_id, rows[2:])
        self.app.finish_run(self.run_id, {"rows": 3})
        self.assertEqual(self.projection.project(self.app, self.run_id), 1)

        selected = self.projection.recorder.select_rows(self.run_id)
        self.assertEqual([row["scheme"] for row in selected], ["MRT", "MRT", "ZF"])
        self.assertTrue(math.isnan(selected[1]["sum_rate"]))

    def test_from_env(self) -> None:
        projection = ResultsProjection.from_env(
            {ResultsProjection.DJANGO_DB_ALIAS: self.db_alias or ""}
        )
        self.assertEqual(projection.recorder.using, self.db_alias)


class TestRecorderWithSQLiteFileDb(TestDjangoResultRecorder):
    db_alias = "sqlite_filedb"
    databases = {"default", "sqlite_filedb"}


class TestProjectionWithSQLiteFileDb(TestResultsProjection):
    db_alias = "sqlite_filedb"
    databases = {"default", "sqlite_filedb"}


class PostgresTestCase(DjangoTestCase):
    @classmethod
    def tearDownClass(cls) -> None:
        # Need to close all connections Django made from other threads,
        # otherwise Django can't tear down the database.
        super().tearDownClass()
        pg_close_all_connections(
            host=os.getenv("POSTGRES_HOST", "127.0.0.1"),
            name="test_" + os.getenv("POSTGRES_DB", "isac_mimo"),
            user=os.getenv("POSTGRES_USER", "isac"),
            password=os.getenv("POSTGRES_PASSWORD", "isac"),
        )


class TestRecorderWithPostgres(PostgresTestCase, TestDjangoResultRecorder):
    db_alias = "postgres"
    databases = {"default", "postgres"}


class TestProjectionWithPostgres(PostgresTestCase, TestResultsProjection):
    db_alias = "postgres"
    databases = {"default", "postgres"}
