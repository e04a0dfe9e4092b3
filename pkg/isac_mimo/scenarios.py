# -*- coding: utf-8 -*-
"""
Scenario files.

A scenario is a plain text file of ``key = value`` lines. Blank lines and
everything after ``#`` are ignored. Lists are comma separated. The keys are
listed in ``SCENARIO_KEYS``; every ``SystemConfig`` field can be set, and keys
that are not given keep the defaults of the simulation setup.

Example::

    id = snr-sweep
    sweep_axis = snr
    sweep_values = 0, 10, 20
    schemes = MRT, ZF
    methods = Proposed, EqualCom, EqualCS
    large_scale_sets = 10
    small_scale_draws = 100
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple, Union

from isac_mimo.allocation import InitPolicy, Method, ScaConfig, db_to_linear
from isac_mimo.channel import SystemConfig
from isac_mimo.exceptions import DomainError, ScenarioError
from isac_mimo.geometry import Angles, UpaSpec
from isac_mimo.precoding import Scheme, check_scheme


class SweepAxis(str, Enum):
    SNR = "snr"
    CRLB_THRESHOLD = "crlb_threshold"
    N_T = "n_t"
    POINTING_ERROR = "pointing_error"


class ScenarioKind(str, Enum):
    SWEEP = "sweep"
    CONVERGENCE = "convergence"


@dataclass(frozen=True)
class Scenario:
    id: str
    system: SystemConfig = field(default_factory=SystemConfig)
    kind: ScenarioKind = ScenarioKind.SWEEP
    sweep_axis: SweepAxis = SweepAxis.SNR
    sweep_values: Tuple[float, ...] = (10.0,)
    schemes: Tuple[Scheme, ...] = (Scheme.MRT, Scheme.ZF)
    methods: Tuple[Method, ...] = (Method.PROPOSED, Method.EQUAL_COM, Method.EQUAL_CS)
    large_scale_sets: int = 10
    small_scale_draws: int = 100
    crlb_theta_db: float = -35.0
    crlb_phi_db: float = -35.0
    init_policy: InitPolicy = InitPolicy.SMALLEST_P0
    max_iters: int = 50
    rel_obj_tol: float = 1e-4
    multi_start: int = 1

    def __post_init__(self) -> None:
        if not self.sweep_values:
            raise DomainError("a scenario needs at least one sweep value")
        if any(b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])):
            raise DomainError("sweep values must be strictly increasing")
        for name in ("large_scale_sets", "small_scale_draws", "multi_start"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be at least 1")
        if not self.schemes or not self.methods:
            raise DomainError("a scenario needs at least one scheme and one method")

    def system_at(self, value: float) -> SystemConfig:
        """The system configuration at one sweep point."""
        if self.sweep_axis is SweepAxis.SNR:
            return replace(self.system, P_t=db_to_linear(value))
        if self.sweep_axis is SweepAxis.N_T:
            if value != int(value):
                raise DomainError(f"N_t sweep value {value} is not an integer")
            return replace(self.system, tx=UpaSpec.square(int(value)))
        return self.system

    def sca_at(self, value: float) -> ScaConfig:
        theta_db, phi_db = self.crlb_theta_db, self.crlb_phi_db
        if self.sweep_axis is SweepAxis.CRLB_THRESHOLD:
            theta_db = phi_db = value
        return ScaConfig.from_db(
            theta_db,
            phi_db,
            max_iters=self.max_iters,
            rel_obj_tol=self.rel_obj_tol,
            init_policy=self.init_policy,
        )

    def beam_at(self, value: float) -> Angles:
        """Direction of the sensing beam, offset by the pointing error in degrees."""
        if self.sweep_axis is SweepAxis.POINTING_ERROR:
            return self.system.target.offset(math.radians(value))
        return self.system.target

    def check(self) -> None:
        """Build every sweep point, raising DomainError on the first bad one."""
        for value in self.sweep_values:
            system = self.system_at(value)
            self.sca_at(value)
            self.beam_at(value)
            for scheme in self.schemes:
                check_scheme(scheme, system.n_t, system.K)


class ScenarioKey(NamedTuple):
    parse: Callable[[str], Any]
    help: str
    target: str = "scenario"


def _int(text: str) -> int:
    return int(text)


def _upa(text: str) -> UpaSpec:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"expected HxV, got {text!r}")
    return UpaSpec(int(parts[0]), int(parts[1]))


def _list(item: Callable[[str], Any]) -> Callable[[str], Tuple[Any, ...]]:
    def parse(text: str) -> Tuple[Any, ...]:
        return tuple(item(part.strip()) for part in text.split(",") if part.strip())

    return parse


SCENARIO_KEYS: Dict[str, ScenarioKey] = {
    "id": ScenarioKey(str, "scenario identifier, defaults to the file name"),
    "kind": ScenarioKey(ScenarioKind, "sweep or convergence"),
    "sweep_axis": ScenarioKey(SweepAxis, "snr, crlb_threshold, n_t or pointing_error"),
    "sweep_values": ScenarioKey(
        _list(float),
        "strictly increasing points: SNR and CRLB limits in dB, N_t as a square "
        "count, pointing errors in degrees",
    ),
    "schemes": ScenarioKey(_list(Scheme), "precoders among MRT, ZF"),
    "methods": ScenarioKey(
        _list(Method), "allocations among Proposed, EqualCom, EqualCS"
    ),
    "large_scale_sets": ScenarioKey(_int, "user drops averaged per point"),
    "small_scale_draws": ScenarioKey(_int, "channel draws of the simulated rate"),
    "crlb_theta_db": ScenarioKey(float, "azimuth CRLB limit in dB"),
    "crlb_phi_db": ScenarioKey(float, "elevation CRLB limit in dB"),
    "init_policy": ScenarioKey(InitPolicy, "half_power or smallest_p0"),
    "max_iters": ScenarioKey(_int, "iteration cap of the power allocation"),
    "rel_obj_tol": ScenarioKey(float, "relative sum-rate change that stops it"),
    "multi_start": ScenarioKey(_int, "starting points of the proposed allocation"),
    "snr_db": ScenarioKey(float, "transmit SNR in dB, sets P_t", "system"),
    "sensing_snr_db": ScenarioKey(float, "sensing SNR in dB, sets |alpha|", "system"),
    "tx": ScenarioKey(_upa, "transmit array as HxV", "system"),
    "rx": ScenarioKey(_upa, "receive array as HxV", "system"),
    "K": ScenarioKey(_int, "number of users", "system"),
    "L": ScenarioKey(_int, "frame length in symbols", "system"),
    "tau_c": ScenarioKey(_int, "coherence interval in symbols", "system"),
    "tau_p": ScenarioKey(_int, "pilot length in symbols", "system"),
    "p_p": ScenarioKey(float, "pilot power", "system"),
    "sigma_c2": ScenarioKey(float, "user noise variance", "system"),
    "sigma_s2": ScenarioKey(float, "radar noise variance", "system"),
    "P_t": ScenarioKey(float, "transmit power budget", "system"),
    "alpha": ScenarioKey(complex, "reflection coefficient, e.g. 0.1+0.1j", "system"),
    "target_theta_deg": ScenarioKey(float, "target azimuth in degrees", "system"),
    "target_phi_deg": ScenarioKey(float, "target elevation in degrees", "system"),
    "cell_radius_m": ScenarioKey(float, "cell radius", "system"),
    "r_h_m": ScenarioKey(float, "minimum user distance", "system"),
    "nu": ScenarioKey(float, "path-loss exponent", "system"),
    "sigma_shadow_db": ScenarioKey(float, "shadowing standard deviation", "system"),
    "seed": ScenarioKey(_int, "master seed", "system"),
}

_EXCLUSIVE = (("snr_db", "P_t"), ("sensing_snr_db", "alpha"))


def _system(values: Dict[str, Any]) -> SystemConfig:
    defaults = SystemConfig()
    theta = values.pop("target_theta_deg", None)
    phi = values.pop("target_phi_deg", None)
    if theta is not None or phi is not None:
        values["target"] = Angles(
            math.radians(theta) if theta is not None else defaults.target.theta,
            math.radians(phi) if phi is not None else defaults.target.phi,
        )
    snr_db = values.pop("snr_db", None)
    if snr_db is not None:
        values["P_t"] = db_to_linear(snr_db)
    sensing_snr_db = values.pop("sensing_snr_db", None)
    system = replace(defaults, **values)
    if sensing_snr_db is not None:
        system = system.with_sensing_snr(db_to_linear(sensing_snr_db))
    return system


def parse_scenario(
    text: str, path: Optional[Union[str, Path]] = None, default_id: str = "scenario"
) -> Scenario:
    seen: Dict[str, int] = {}
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise ScenarioError("expected 'key = value'", path, number)
        if key not in SCENARIO_KEYS:
            raise ScenarioError(f"unknown key {key!r}", path, number)
        if key in seen:
            raise ScenarioError(
                f"duplicate key {key!r}, first set on line {seen[key]}", path, number
            )
        try:
            values[key] = SCENARIO_KEYS[key].parse(value)
        except (ValueError, DomainError) as e:
            raise ScenarioError(f"bad value for {key}: {e}", path, number) from e
        seen[key] = number

    for first, second in _EXCLUSIVE:
        if first in seen and second in seen:
            raise ScenarioError(
                f"{first} and {second} cannot both be set", path, seen[second]
            )

    system_values = {
        k: v for k, v in values.items() if SCENARIO_KEYS[k].target == "system"
    }
    scenario_values = {
        k: v for k, v in values.items() if SCENARIO_KEYS[k].target == "scenario"
    }
    scenario_values.setdefault("id", default_id)
    try:
        scenario = Scenario(system=_system(system_values), **scenario_values)
        scenario.check()
    except DomainError as e:
        raise ScenarioError(str(e), path) from e
    return scenario


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e.strerror}", path) from e
    return parse_scenario(text, path, default_id=path.stem)


def scenario_settings(scenario: Scenario) -> Dict[str, Any]:
    """Flat, JSON-friendly description of a scenario."""
    settings: Dict[str, Any] = {}
    for f in dataclasses.fields(scenario):
        value = getattr(scenario, f.name)
        if f.name == "system":
            continue
        if isinstance(value, tuple):
            value = [v.value if isinstance(v, Enum) else v for v in value]
        elif isinstance(value, Enum):
            value = value.value
        settings[f.name] = value
    system = scenario.system
    settings.update(
        tx=str(system.tx),
        rx=str(system.rx),
        K=system.K,
        L=system.L,
        P_t=system.P_t,
        alpha=str(system.alpha),
        target_theta_deg=math.degrees(system.target.theta),
        target_phi_deg=math.degrees(system.target.phi),
        seed=system.seed,
    )
    return settings


def keys_help() -> List[str]:
    return [f"{key}: {spec.help}" for key, spec in SCENARIO_KEYS.items()]
