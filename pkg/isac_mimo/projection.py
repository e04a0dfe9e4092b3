# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
import os
from typing import TYPE_CHECKING, Mapping, Optional
from uuid import UUID

if TYPE_CHECKING:  # pragma: nocover
    from isac_mimo.application import Experiments
    from isac_mimo.recorders import DjangoResultRecorder

logger = logging.getLogger(__name__)


class ResultsProjection:
    """Copies the rows of recorded runs into the result_rows table."""

    DJANGO_DB_ALIAS = "DJANGO_DB_ALIAS"

    def __init__(self, recorder: DjangoResultRecorder):
        self.recorder = recorder

    @classmethod
    def from_env(cls, env: Optional[Mapping[str, str]] = None) -> ResultsProjection:
        from isac_mimo.recorders import DjangoResultRecorder

        env = os.environ if env is None else env
        return cls(DjangoResultRecorder(using=env.get(cls.DJANGO_DB_ALIAS) or None))

    def project(self, app: Experiments, run_id: UUID) -> int:
        """Write the rows past the tracked position. Returns how many were written."""
        position = self.recorder.max_tracking_position(run_id)
        rows = app.get_rows(run_id)[position:]
        if rows:
            self.recorder.insert_rows(run_id, rows, tracking_position=position)
        logger.debug("projected %d rows of run %s", len(rows), run_id)
        return len(rows)
