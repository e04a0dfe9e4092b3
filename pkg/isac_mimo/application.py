# -*- coding: utf-8 -*-
from __future__ import annotations

from typing import Any, Dict, List, Optional
from uuid import UUID

from eventsourcing.application import Application
from eventsourcing.domain import Aggregate, event

from isac_mimo.exceptions import DomainError


class ExperimentRun(Aggregate):
    """The recorded history of one scenario run."""

    @event("Started")
    def __init__(self, scenario_id: str, seed: int, settings: Dict[str, Any]):
        self.scenario_id = scenario_id
        self.seed = seed
        self.settings = settings
        self.rows: List[Dict[str, Any]] = []
        self.summary: Optional[Dict[str, Any]] = None

    @property
    def is_finished(self) -> bool:
        return self.summary is not None

    @event("RowRecorded")
    def record_row(self, row: Dict[str, Any]) -> None:
        self.rows.append(row)

    @event("Finished")
    def finish(self, summary: Dict[str, Any]) -> None:
        self.summary = summary


class Experiments(Application):
    def start_run(self, scenario_id: str, seed: int, settings: Dict[str, Any]) -> UUID:
        run = ExperimentRun(scenario_id=scenario_id, seed=seed, settings=settings)
        self.save(run)
        return run.id

    def record_row(self, run_id: UUID, row: Dict[str, Any]) -> None:
        self.record_rows(run_id, [row])

    def record_rows(self, run_id: UUID, rows: List[Dict[str, Any]]) -> None:
        run = self._get_open_run(run_id)
        for row in rows:
            run.record_row(row)
        self.save(run)

    def finish_run(self, run_id: UUID, summary: Dict[str, Any]) -> None:
        run = self._get_open_run(run_id)
        run.finish(summary)
        self.save(run)

    def get_run(self, run_id: UUID) -> ExperimentRun:
        run = self.repository.get(run_id)
        assert isinstance(run, ExperimentRun)
        return run

    def get_rows(self, run_id: UUID) -> List[Dict[str, Any]]:
        return list(self.get_run(run_id).rows)

    def get_summary(self, run_id: UUID) -> Optional[Dict[str, Any]]:
        return self.get_run(run_id).summary

    def _get_open_run(self, run_id: UUID) -> ExperimentRun:
        run = self.get_run(run_id)
        if run.is_finished:
            raise DomainError(f"run {run_id} is already finished")
        return run
