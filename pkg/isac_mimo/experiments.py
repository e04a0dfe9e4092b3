# -*- coding: utf-8 -*-
"""
Runs scenarios and writes their results.

Every (large-scale set, sweep point) pair is one unit of work. Units run on a
thread pool and results are put back in a fixed order, so output does not
depend on the number of workers.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import (
    TYPE_CHECKING,
    Any,
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
    Type,
    TypeVar,
    Union,
)
from uuid import UUID

import numpy as np
import pandas as pd

from isac_mimo.allocation import (
    InitPolicy,
    Method,
    ScaTrace,
    allocate,
    run_multi_start,
    run_sca,
)
from isac_mimo.channel import LargeScaleSet, SystemConfig, draw_large_scale, rng_stream
from isac_mimo.exceptions import DomainError, EmitError, InfeasibleScenarioError
from isac_mimo.montecarlo import ordered_map
from isac_mimo.precoding import PowerAllocation, Scheme, power_split
from isac_mimo.rate import closed_form_rate, monte_carlo_rate
from isac_mimo.scenarios import (
    Scenario,
    ScenarioKind,
    load_scenario,
    scenario_settings,
)
from isac_mimo.sensing import (
    CrlbPair,
    crlb_general,
    crlb_simplified,
    fisher_blocks_general,
    to_db,
)

if TYPE_CHECKING:  # pragma: nocover
    from isac_mimo.application import Experiments

logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12


@dataclass(frozen=True)
class ResultRow:
    scenario_id: str
    scheme: str
    method: str
    sweep_value: float
    # None on aggregate rows.
    large_scale_set: Optional[int]
    sum_rate: float
    sum_rate_mc: float
    per_user_rates: Tuple[float, ...]
    crlb_theta: float
    crlb_phi: float
    crlb_theta_db: float
    crlb_phi_db: float
    comm_power: float
    sensing_power: float
    iterations: float
    feasible: bool
    wall_time: float

    def rounded(self) -> ResultRow:
        return _rounded(self)


@dataclass(frozen=True)
class ConvergenceRow:
    scenario_id: str
    scheme: str
    init_policy: str
    sweep_value: float
    large_scale_set: int
    iteration: int
    sum_rate: float
    rho: float
    comm_power: float
    sensing_power: float
    crlb_theta_db: float
    crlb_phi_db: float


Row = TypeVar("Row", ResultRow, ConvergenceRow)

CSV_COLUMNS: Tuple[str, ...] = tuple(f.name for f in dataclasses.fields(ResultRow))
CSV_HEADER = ",".join(CSV_COLUMNS)
CONVERGENCE_COLUMNS: Tuple[str, ...] = tuple(
    f.name for f in dataclasses.fields(ConvergenceRow)
)


def _round(value: float) -> float:
    if not math.isfinite(value):
        return value
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def _rounded(row: Row) -> Row:
    changes: Dict[str, Any] = {}
    for f in dataclasses.fields(row):
        value = getattr(row, f.name)
        if isinstance(value, float):
            changes[f.name] = _round(value)
        elif isinstance(value, tuple):
            changes[f.name] = tuple(_round(v) for v in value)
    return dataclasses.replace(row, **changes)


@dataclass
class ScenarioResult:
    scenario: Scenario
    rows: List[ResultRow]
    aggregates: List[ResultRow]
    run_id: Optional[UUID] = None

    @property
    def all_infeasible(self) -> bool:
        return not any(row.feasible for row in self.rows)

    def summary(self) -> Dict[str, Any]:
        feasible = sum(row.feasible for row in self.rows)
        return {
            "scenario_id": self.scenario.id,
            "rows": len(self.rows),
            "feasible_rows": feasible,
            "infeasible_rows": len(self.rows) - feasible,
            "wall_time": math.fsum(row.wall_time for row in self.rows),
        }


def _large_scale(system: SystemConfig, index: int) -> LargeScaleSet:
    # The drop depends only on the set index so sweep points share users.
    return draw_large_scale(system, rng_stream(system.seed, "large-scale", index))


def _row(
    scenario: Scenario,
    system: SystemConfig,
    ls: LargeScaleSet,
    scheme: Scheme,
    method: Method,
    point: Tuple[int, float],
    set_index: int,
) -> ResultRow:
    index, value = point
    started = time.perf_counter()
    sca = scenario.sca_at(value)
    beam = scenario.beam_at(value)
    base = dict(
        scenario_id=scenario.id,
        scheme=scheme.value,
        method=method.value,
        sweep_value=float(value),
        large_scale_set=set_index,
    )
    alloc: PowerAllocation
    trace: Optional[ScaTrace]
    try:
        if method is Method.PROPOSED and scenario.multi_start > 1:
            trace = run_multi_start(
                ls,
                scheme,
                system,
                sca,
                starts=scenario.multi_start,
                stream=(set_index, index, scheme.value),
            )
            alloc = trace.allocation
        else:
            alloc, trace = allocate(ls, scheme, system, method, sca)
    except InfeasibleScenarioError as e:
        logger.warning(
            "%s: %s/%s infeasible at %s=%g, set %d: %s",
            scenario.id,
            scheme.value,
            method.value,
            scenario.sweep_axis.value,
            value,
            set_index,
            e,
        )
        return _infeasible_row(base, time.perf_counter() - started, system.K)

    rate = closed_form_rate(ls, scheme, alloc, system)
    simulated = monte_carlo_rate(
        ls,
        scheme,
        alloc,
        system,
        scenario.small_scale_draws,
        v_angles=beam,
        stream=(set_index, index),
    )
    crlb = _crlb(ls, scheme, alloc, system, scenario, value)
    comm, sensing = power_split(ls, scheme, alloc, system.n_t)
    return ResultRow(
        **base,  # type: ignore[arg-type]
        sum_rate=rate.sum_rate,
        sum_rate_mc=simulated.sum_rate,
        per_user_rates=tuple(float(r) for r in rate.per_user_rate),
        crlb_theta=crlb.crlb_theta,
        crlb_phi=crlb.crlb_phi,
        crlb_theta_db=crlb.theta_db,
        crlb_phi_db=crlb.phi_db,
        comm_power=comm,
        sensing_power=sensing,
        iterations=float(trace.n_iterations if trace is not None else 0),
        feasible=True,
        wall_time=time.perf_counter() - started,
    )


def _crlb(
    ls: LargeScaleSet,
    scheme: Scheme,
    alloc: PowerAllocation,
    system: SystemConfig,
    scenario: Scenario,
    value: float,
) -> CrlbPair:
    beam = scenario.beam_at(value)
    if beam == system.target:
        return crlb_simplified(ls, scheme, alloc, system)
    return crlb_general(fisher_blocks_general(ls, scheme, alloc, system, beam))


def _infeasible_row(base: Dict[str, Any], wall_time: float, K: int) -> ResultRow:
    nan = math.nan
    return ResultRow(
        **base,
        sum_rate=nan,
        sum_rate_mc=nan,
        per_user_rates=(nan,) * K,
        crlb_theta=nan,
        crlb_phi=nan,
        crlb_theta_db=nan,
        crlb_phi_db=nan,
        comm_power=nan,
        sensing_power=nan,
        iterations=0.0,
        feasible=False,
        wall_time=wall_time,
    )


def _unit(scenario: Scenario, unit: Tuple[int, int, float]) -> List[ResultRow]:
    set_index, index, value = unit
    system = scenario.system_at(value)
    ls = _large_scale(system, set_index)
    return [
        _row(scenario, system, ls, scheme, method, (index, value), set_index)
        for scheme in scenario.schemes
        for method in scenario.methods
    ]


def _order(scenario: Scenario, row: ResultRow) -> Tuple[int, int, int, int]:
    return (
        scenario.sweep_values.index(row.sweep_value),
        [s.value for s in scenario.schemes].index(row.scheme),
        [m.value for m in scenario.methods].index(row.method),
        row.large_scale_set if row.large_scale_set is not None else -1,
    )


def aggregate(rows: Sequence[ResultRow]) -> List[ResultRow]:
    """Means over large-scale sets, one row per (sweep value, scheme, method)."""
    groups: Dict[Tuple[float, str, str], List[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.sweep_value, row.scheme, row.method), []).append(row)
    out = []
    for (value, scheme, method), members in groups.items():
        feasible = [m for m in members if m.feasible]
        if not feasible:
            base = dict(
                scenario_id=members[0].scenario_id,
                scheme=scheme,
                method=method,
                sweep_value=value,
                large_scale_set=None,
            )
            wall = math.fsum(m.wall_time for m in members) / len(members)
            out.append(_infeasible_row(base, wall, len(members[0].per_user_rates)))
            continue

        def mean(name: str) -> float:
            return math.fsum(getattr(m, name) for m in feasible) / len(feasible)

        crlb_theta, crlb_phi = mean("crlb_theta"), mean("crlb_phi")
        per_user = np.mean([m.per_user_rates for m in feasible], axis=0)
        out.append(
            ResultRow(
                scenario_id=feasible[0].scenario_id,
                scheme=scheme,
                method=method,
                sweep_value=value,
                large_scale_set=None,
                sum_rate=mean("sum_rate"),
                sum_rate_mc=mean("sum_rate_mc"),
                per_user_rates=tuple(float(r) for r in per_user),
                crlb_theta=crlb_theta,
                crlb_phi=crlb_phi,
                crlb_theta_db=to_db(crlb_theta),
                crlb_phi_db=to_db(crlb_phi),
                comm_power=mean("comm_power"),
                sensing_power=mean("sensing_power"),
                iterations=mean("iterations"),
                feasible=True,
                wall_time=mean("wall_time"),
            )
        )
    return out


def run_scenario(
    scenario: Union[Scenario, str, Path],
    *,
    workers: int = 1,
    app: Optional[Experiments] = None,
) -> ScenarioResult:
    """Run a sweep scenario, given as a Scenario or the path of its file."""
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    if scenario.kind is not ScenarioKind.SWEEP:
        raise DomainError(f"scenario {scenario.id} is a {scenario.kind.value} run")
    logger.info(
        "running %s: %d points x %d sets",
        scenario.id,
        len(scenario.sweep_values),
        scenario.large_scale_sets,
    )
    units = [
        (set_index, index, value)
        for index, value in enumerate(scenario.sweep_values)
        for set_index in range(scenario.large_scale_sets)
    ]
    batches = ordered_map(partial(_unit, scenario), units, workers)
    order = partial(_order, scenario)
    rows = sorted((row for batch in batches for row in batch), key=order)
    aggregates = sorted(aggregate(rows), key=order)
    result = ScenarioResult(scenario=scenario, rows=rows, aggregates=aggregates)
    if app is not None:
        result.run_id = record_run(app, result)
    logger.info("finished %s: %s", scenario.id, result.summary())
    return result


def record_run(app: Experiments, result: ScenarioResult) -> UUID:
    scenario = result.scenario
    run_id = app.start_run(
        scenario.id, scenario.system.seed, scenario_settings(scenario)
    )
    app.record_rows(run_id, [row_to_record(row) for row in result.rows])
    app.finish_run(run_id, result.summary())
    return run_id


def run_convergence(scenario: Scenario) -> List[ConvergenceRow]:
    """Sum rate after every iteration, for both starting points."""
    rows = []
    for value in scenario.sweep_values:
        system = scenario.system_at(value)
        sca_base = scenario.sca_at(value)
        for set_index in range(scenario.large_scale_sets):
            ls = _large_scale(system, set_index)
            for scheme in scenario.schemes:
                for policy in InitPolicy:
                    sca = dataclasses.replace(sca_base, init_policy=policy)
                    trace = run_sca(ls, scheme, system, sca)
                    key = (scheme, policy, value, set_index)
                    rows.extend(_trace_rows(scenario, ls, system, key, trace))
    return rows


def _trace_rows(
    scenario: Scenario,
    ls: LargeScaleSet,
    system: SystemConfig,
    key: Tuple[Scheme, InitPolicy, float, int],
    trace: ScaTrace,
) -> List[ConvergenceRow]:
    scheme, policy, value, set_index = key
    rows = []
    for it in trace.iterations:
        alloc = PowerAllocation(gamma=it.gamma, rho=it.rho)
        comm, sensing = power_split(ls, scheme, alloc, system.n_t)
        crlb = crlb_simplified(ls, scheme, alloc, system)
        rows.append(
            ConvergenceRow(
                scenario_id=scenario.id,
                scheme=scheme.value,
                init_policy=policy.value,
                sweep_value=float(value),
                large_scale_set=set_index,
                iteration=it.index,
                sum_rate=it.objective,
                rho=it.rho,
                comm_power=comm,
                sensing_power=sensing,
                crlb_theta_db=crlb.theta_db,
                crlb_phi_db=crlb.phi_db,
            )
        )
    return rows


def row_to_record(row: Union[ResultRow, ConvergenceRow]) -> Dict[str, Any]:
    """Plain dict of a row, with floats kept to 12 significant digits."""
    record = dataclasses.asdict(_rounded(row))
    for key, value in record.items():
        if isinstance(value, tuple):
            record[key] = list(value)
    return record


def row_from_record(record: Dict[str, Any], row_type: Type[Row]) -> Row:
    values = dict(record)
    for f in dataclasses.fields(row_type):
        value = values.get(f.name)
        if isinstance(value, list):
            values[f.name] = tuple(math.nan if v is None else float(v) for v in value)
        elif value is None and f.name != "large_scale_set":
            values[f.name] = math.nan
    return row_type(**values)


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def emit(
    rows: Sequence[Union[ResultRow, ConvergenceRow]],
    path: Union[str, Path],
    fmt: str = "csv",
) -> Path:
    """Write rows as CSV or JSON. Non-finite floats become empty cells or null."""
    if not rows:
        raise DomainError("nothing to emit")
    path = Path(path)
    records = [row_to_record(row) for row in rows]
    try:
        if fmt == "json":
            safe = [{k: _json_safe(v) for k, v in r.items()} for r in records]
            path.write_text(
                json.dumps(safe, indent=2, allow_nan=False) + "\n", encoding="utf-8"
            )
        elif fmt == "csv":
            columns = [f.name for f in dataclasses.fields(type(rows[0]))]
            for record in records:
                for key, value in record.items():
                    if isinstance(value, list):
                        record[key] = ";".join(f"{v:.12g}" for v in value)
            frame = pd.DataFrame.from_records(records, columns=columns)
            frame.to_csv(path, index=False, float_format="%.12g")
        else:
            raise DomainError(f"unknown output format {fmt!r}")
    except OSError as e:
        raise EmitError(path, e.strerror or str(e)) from e
    return path


def read_json(
    path: Union[str, Path], row_type: Type[Row] = ResultRow  # type: ignore[assignment]
) -> List[Row]:
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise EmitError(path, e.strerror or str(e)) from e
    return [row_from_record(record, row_type) for record in records]
