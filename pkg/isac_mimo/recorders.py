# -*- coding: utf-8 -*-
from __future__ import annotations

import math
from contextlib import contextmanager
from functools import wraps
from threading import Lock
from typing import TYPE_CHECKING
from uuid import UUID

import django.db
from django.db import transaction
from django.db.backends.signals import connection_created
from django.db.transaction import get_connection
from eventsourcing.persistence import (
    DatabaseError,
    DataError,
    IntegrityError,
    InterfaceError,
    InternalError,
    NotSupportedError,
    OperationalError,
    PersistenceError,
    ProgrammingError,
)

from isac_mimo.models import ProjectionTrackingRecord, ResultRowRecord

if TYPE_CHECKING:
    from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Type

    from django.db import ConnectionProxy

journal_modes: Dict[str, str] = {}

# Most specific first: django.db.Error is the base of all the others.
_ERRORS: Tuple[Tuple[Type[Exception], Type[PersistenceError]], ...] = (
    (django.db.InterfaceError, InterfaceError),
    (django.db.DataError, DataError),
    (django.db.OperationalError, OperationalError),
    (django.db.IntegrityError, IntegrityError),
    (django.db.InternalError, InternalError),
    (django.db.ProgrammingError, ProgrammingError),
    (django.db.NotSupportedError, NotSupportedError),
    (django.db.DatabaseError, DatabaseError),
    (django.db.Error, PersistenceError),
)

_NULLABLE = (
    "sum_rate",
    "sum_rate_mc",
    "crlb_theta",
    "crlb_phi",
    "crlb_theta_db",
    "crlb_phi_db",
    "comm_power",
    "sensing_power",
    "iterations",
)


def detect_sqlite(connection: ConnectionProxy) -> bool:
    return connection.vendor == "sqlite"


def detect_sqlite_memory_mode(connection: ConnectionProxy) -> bool:
    db_name = str(connection.settings_dict["NAME"])
    return ":memory:" in db_name or "mode=memory" in db_name


def use_wal_on_sqlite_file_db(
    sender: Any, connection: ConnectionProxy, **kwargs: Any
) -> None:
    if not detect_sqlite(connection) or detect_sqlite_memory_mode(connection):
        return
    db_name = str(connection.settings_dict["NAME"])
    if journal_modes.get(db_name) == "WAL":
        return
    cursor = connection.cursor()
    cursor.execute("PRAGMA journal_mode;")
    if cursor.fetchall()[0][0].upper() != "WAL":
        cursor.execute("PRAGMA journal_mode=WAL;")
    journal_modes[db_name] = "WAL"


connection_created.connect(use_wal_on_sqlite_file_db)


def errors(f: Any) -> Any:
    """Re-raise django.db errors as the matching eventsourcing.persistence error."""

    @wraps(f)
    def _wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return f(*args, **kwargs)
        except django.db.Error as e:
            for django_error, persistence_error in _ERRORS:
                if isinstance(e, django_error):
                    raise persistence_error(e) from e
            raise

    return _wrapper


def _to_column(value: Any) -> Any:
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _from_column(value: Any) -> Any:
    return math.nan if value is None else value


class DjangoResultRecorder:
    """Stores projected result rows in the result_rows table."""

    def __init__(self, using: Optional[str] = None):
        self.using = using or None
        connection = get_connection(using=self.using)

        self.lock: Optional[Lock]
        if detect_sqlite(connection) and detect_sqlite_memory_mode(connection):
            self.lock = Lock()
        else:
            self.lock = None

    @contextmanager
    def serialize(self) -> Iterator[None]:
        try:
            if self.lock:
                self.lock.acquire()
            yield
        finally:
            if self.lock:
                self.lock.release()

    @errors
    def insert_rows(
        self, run_id: UUID, rows: Sequence[Dict[str, Any]], tracking_position: int
    ) -> None:
        """Insert rows at positions from tracking_position and advance the tracking.

        Raises IntegrityError if the tracked position has moved on.
        """
        with self.serialize():
            with transaction.atomic(using=self.using):
                self._lock_table()
                if self._tracking_position(run_id) != tracking_position:
                    raise django.db.IntegrityError(
                        f"run {run_id} is not tracked at position {tracking_position}"
                    )
                ResultRowRecord.objects.using(alias=self.using).bulk_create(
                    [
                        self._record(run_id, tracking_position + offset, row)
                        for offset, row in enumerate(rows)
                    ]
                )
                ProjectionTrackingRecord.objects.using(
                    alias=self.using
                ).update_or_create(
                    run_id=run_id,
                    defaults={"position": tracking_position + len(rows)},
                )

    @errors
    def select_rows(self, run_id: UUID) -> List[Dict[str, Any]]:
        records = (
            ResultRowRecord.objects.using(alias=self.using)
            .filter(run_id=run_id)
            .order_by("position")
        )
        return [self._row(record) for record in records]

    @errors
    def max_tracking_position(self, run_id: UUID) -> int:
        return self._tracking_position(run_id)

    def _tracking_position(self, run_id: UUID) -> int:
        record = (
            ProjectionTrackingRecord.objects.using(alias=self.using)
            .filter(run_id=run_id)
            .first()
        )
        return 0 if record is None else int(record.position)

    def _lock_table(self) -> None:
        connection = get_connection(using=self.using)
        if connection.vendor == "postgresql":
            cursor = connection.cursor()
            cursor.execute(
                f"LOCK TABLE {ResultRowRecord._meta.db_table} IN EXCLUSIVE MODE"
            )

    @staticmethod
    def _record(run_id: UUID, position: int, row: Dict[str, Any]) -> ResultRowRecord:
        values = {name: _to_column(row.get(name)) for name in _NULLABLE}
        rates = row.get("per_user_rates") or []
        return ResultRowRecord(
            run_id=run_id,
            position=position,
            scenario_id=row["scenario_id"],
            scheme=row["scheme"],
            method=row["method"],
            sweep_value=row["sweep_value"],
            large_scale_set=row.get("large_scale_set"),
            per_user_rates=";".join(repr(float(r)) for r in rates),
            feasible=bool(row["feasible"]),
            wall_time=row["wall_time"],
            **values,
        )

    @staticmethod
    def _row(record: ResultRowRecord) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "scenario_id": record.scenario_id,
            "scheme": record.scheme,
            "method": record.method,
            "sweep_value": record.sweep_value,
            "large_scale_set": record.large_scale_set,
            "per_user_rates": [
                float(r) for r in record.per_user_rates.split(";") if r
            ],
            "feasible": record.feasible,
            "wall_time": record.wall_time,
        }
        row.update({name: _from_column(getattr(record, name)) for name in _NULLABLE})
        return row
