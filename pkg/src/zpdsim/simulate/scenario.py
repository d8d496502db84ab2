"""Scenario model and its versioned JSON form."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import jsonschema

from ..device import BatterySpec, DutyCycleProfile, ImdConfig, McuSpec, TransceiverSpec
from ..powerpath import Medium, Reader, ReaderKind, WptTechnique, WPT_CATALOG, needs_reservoir
from ..protocol import AuthProtocolSpec, default_protocol, most_expensive_step
from ..reservoir import ReservoirSpec
from ..units import (Capacitance, Charge, Current, DataRate, Energy, Frequency, Length, Power,
                     Quantity, Resistance, TimeSpan, UnitError, Voltage, parse_quantity)
from .strategies import DefenseStrategy, StrategyKind

__all__ = [
    "SCHEMA_VERSION",
    "ScenarioError",
    "Actor",
    "Credentials",
    "RepeatMode",
    "Repeat",
    "Request",
    "WptConfig",
    "SimOptions",
    "Scenario",
    "scenario_schema",
    "load_scenario",
    "scenario_from_dict",
]

SCHEMA_VERSION = 1
DEFAULT_KEY = bytes(range(16))


class ScenarioError(ValueError):
    """A scenario failed validation. ``violations`` lists every problem found."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))


class Actor(str, enum.Enum):
    ATTACKER = "attacker"
    LEGITIMATE = "legitimate"


class Credentials(str, enum.Enum):
    VALID = "valid"
    INVALID = "invalid"


class RepeatMode(str, enum.Enum):
    BACK_TO_BACK = "back-to-back"
    PERIODIC = "periodic"
    POISSON = "poisson"


@dataclass(frozen=True)
class Repeat:
    """Turns one request into a stream.

    A stream stops at ``until`` (absolute time), after ``count`` requests, or at
    the horizon, whichever comes first.
    """

    mode: RepeatMode
    period: Optional[TimeSpan] = None
    rate: Optional[float] = None
    until: Optional[TimeSpan] = None
    count: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", RepeatMode(self.mode))


@dataclass(frozen=True)
class Request:
    time: TimeSpan
    actor: Actor
    reader: Reader = Reader(ReaderKind.UNKNOWN, 0.0)
    credentials: Credentials = Credentials.INVALID
    repeat: Optional[Repeat] = None

    def __post_init__(self):
        object.__setattr__(self, "time", TimeSpan(self.time))
        object.__setattr__(self, "actor", Actor(self.actor))
        object.__setattr__(self, "credentials", Credentials(self.credentials))

    @classmethod
    def attack(cls, time: float = 0.0, mode: str = "back-to-back", distance: float = 0.01,
               **repeat) -> "Request":
        return cls(TimeSpan(time), Actor.ATTACKER, Reader(ReaderKind.UNKNOWN, distance),
                   Credentials.INVALID, Repeat(RepeatMode(mode), **repeat))

    @classmethod
    def legitimate(cls, time: float, kind: ReaderKind = ReaderKind.PROGRAMMER,
                   distance: float = 0.01) -> "Request":
        return cls(TimeSpan(time), Actor.LEGITIMATE, Reader(kind, distance), Credentials.VALID)


@dataclass(frozen=True)
class WptConfig:
    technique: Union[WptTechnique, str] = WptTechnique.IPT
    delivered_power: Optional[Power] = None
    powers: Tuple[Tuple[WptTechnique, float], ...] = ()

    def __post_init__(self):
        if self.technique != "adaptive":
            object.__setattr__(self, "technique", WptTechnique(self.technique))
        if self.delivered_power is not None:
            object.__setattr__(self, "delivered_power", Power(self.delivered_power))

    @property
    def adaptive(self) -> bool:
        return self.technique == "adaptive"

    def power_table(self) -> Dict[WptTechnique, float]:
        table = {t: float(WPT_CATALOG[t].delivered_power) for t in WptTechnique}
        table.update({WptTechnique(t): float(p) for t, p in self.powers})
        if not self.adaptive and self.delivered_power is not None:
            table[self.technique] = float(self.delivered_power)
        return table


@dataclass(frozen=True)
class SimOptions:
    use_esr: bool = False
    wake_latency: TimeSpan = TimeSpan(0.0)
    deadline: TimeSpan = TimeSpan(5.0)
    trace_capacity: int = 100_000


@dataclass(frozen=True)
class Scenario:
    imd: ImdConfig
    reservoir: Optional[ReservoirSpec]
    strategy: DefenseStrategy
    workload: Tuple[Request, ...]
    horizon: TimeSpan
    protocol: AuthProtocolSpec = field(default_factory=default_protocol)
    wpt: WptConfig = WptConfig()
    seed: int = 0
    initial_voltage: Voltage = Voltage(0.0)
    post_auth_energy: Energy = Energy(0.0)
    options: SimOptions = SimOptions()

    def __post_init__(self):
        object.__setattr__(self, "workload", tuple(self.workload))
        object.__setattr__(self, "horizon", TimeSpan(self.horizon))
        object.__setattr__(self, "initial_voltage", Voltage(self.initial_voltage))
        object.__setattr__(self, "post_auth_energy", Energy(self.post_auth_energy))

    def with_strategy(self, strategy: DefenseStrategy) -> "Scenario":
        return replace(self, strategy=strategy)

    def violations(self) -> List[str]:
        out: List[str] = []
        if not self.horizon > 0:
            out.append("horizon must be > 0")
        times = [float(r.time) for r in self.workload]
        if any(b < a for a, b in zip(times, times[1:])):
            out.append("workload must be sorted by time")
        for i, r in enumerate(self.workload):
            rep = r.repeat
            if rep is None:
                continue
            if rep.mode is RepeatMode.PERIODIC and not (rep.period and rep.period > 0):
                out.append(f"workload[{i}]: periodic repeat needs period > 0")
            if rep.mode is RepeatMode.POISSON and not (rep.rate and rep.rate > 0):
                out.append(f"workload[{i}]: poisson repeat needs rate > 0")
            if rep.until is not None and rep.until < r.time:
                out.append(f"workload[{i}]: repeat.until precedes the first request")
        res = self.reservoir
        if res is not None and not 0 <= self.initial_voltage <= res.v_max:
            out.append(f"initial_voltage {self.initial_voltage:g} V outside [0, {res.v_max:g}] V")
        if self.strategy.harvests:
            p_active = self.imd.active_power
            powers = self.wpt.power_table()
            if self.wpt.adaptive:
                p_ch = min(powers.values())
            else:
                p_ch = powers[self.wpt.technique]
            if not p_ch > 0:
                out.append("delivered WPT power must be > 0 for a harvesting strategy")
            direct_ok = not needs_reservoir(Power(p_active), Power(p_ch))
            _, max_step = most_expensive_step(self.protocol)
            out.extend(self.strategy.violations(res, float(self.protocol.total_e_auth), float(max_step),
                                                direct_ok))
        return out

    def validate(self) -> "Scenario":
        problems = self.violations()
        if problems:
            raise ScenarioError(problems)
        return self


# --- JSON ----------------------------------------------------------------------

@lru_cache(maxsize=None)
def scenario_schema() -> dict:
    text = resources.files("zpdsim").joinpath("data/scenario.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _q(value, kind, path: str, errors: List[str], voltage: Optional[float] = None):
    if value is None:
        return None
    try:
        if isinstance(value, (int, float)):
            return kind(float(value))
        return parse_quantity(value, expect=kind, voltage=voltage)
    except (UnitError, TypeError, ValueError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def _reader(data, path: str, errors: List[str]) -> Reader:
    if data is None:
        return Reader(ReaderKind.UNKNOWN, 0.0)
    if isinstance(data, str):
        return Reader(ReaderKind(data), 0.0)
    dist = _q(data.get("distance", 0.0), Length, f"{path}.distance", errors)
    return Reader(ReaderKind(data["kind"]), dist or 0.0, data.get("claimed"),
                  Medium(data.get("medium", "air")))


def _kwargs(section: dict, spec: Dict[str, type], path: str, errors: List[str]) -> dict:
    out = {}
    for name, kind in spec.items():
        if name in section:
            if kind in (int, float, str, bool):
                out[name] = section[name]
            else:
                value = _q(section[name], kind, f"{path}.{name}", errors)
                if value is not None:
                    out[name] = value
    return out


def _build(section_errors: List[str], path: str, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        section_errors.append(f"{path}: {exc}")
        return None


def scenario_from_dict(data: dict) -> Scenario:
    """Validate ``data`` against the schema, then build and check a Scenario."""
    validator = jsonschema.Draft202012Validator(scenario_schema())
    schema_errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if schema_errors:
        raise ScenarioError([f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                             for e in schema_errors])
    errors: List[str] = []

    imd_d = data["imd"]
    batt_d = imd_d["battery"]
    nominal = _q(batt_d.get("nominal_voltage", 3.3), Voltage, "imd.battery.nominal_voltage", errors)
    capacity = _q(batt_d["capacity"], Charge, "imd.battery.capacity", errors)
    battery = None
    if capacity is not None and nominal is not None:
        battery = _build(errors, "imd.battery", BatterySpec, capacity, nominal, batt_d.get("initial_soc", 1.0))
    mcu = _build(errors, "imd.mcu", McuSpec, **_kwargs(imd_d.get("mcu", {}), {
        "active_current": Current, "sleep_current": Current, "clock": Frequency, "supply": Voltage},
        "imd.mcu", errors))
    tx = _build(errors, "imd.transceiver", TransceiverSpec, **_kwargs(imd_d.get("transceiver", {}), {
        "active_current": Current, "sleep_current": Current, "data_rate": DataRate, "scheme": str},
        "imd.transceiver", errors))
    duty = _build(errors, "imd.duty", DutyCycleProfile, **imd_d.get("duty", {}))
    therapy = _q(imd_d.get("therapy_current", 0.0), Current, "imd.therapy_current", errors)
    imd = None
    if None not in (battery, mcu, tx, duty, therapy):
        imd = _build(errors, "imd", ImdConfig, battery, mcu, tx, duty, therapy)

    reservoir = None
    initial_v = Voltage(0.0)
    res_d = data.get("reservoir")
    if res_d is not None:
        kw = _kwargs(res_d, {"capacitance": Capacitance, "esr": Resistance, "v_max": Voltage, "v_min": Voltage},
                     "reservoir", errors)
        if {"capacitance", "v_max", "v_min"} <= kw.keys():
            reservoir = _build(errors, "reservoir", ReservoirSpec, **kw)
        initial_v = _q(res_d.get("initial_voltage", 0.0), Voltage, "reservoir.initial_voltage", errors) or Voltage(0.0)

    wpt_d = data.get("wpt", {})
    powers = tuple((WptTechnique(k), _q(v, Power, f"wpt.powers.{k}", errors) or 0.0)
                   for k, v in sorted(wpt_d.get("powers", {}).items()))
    wpt = _build(errors, "wpt", WptConfig, wpt_d.get("technique", "IPT"),
                 _q(wpt_d.get("delivered_power"), Power, "wpt.delivered_power", errors), powers)

    proto_d = data.get("protocol", {})
    key = bytes.fromhex(proto_d["key"]) if "key" in proto_d else DEFAULT_KEY
    e_auth = _q(proto_d.get("e_auth", 20.07e-6), Energy, "protocol.e_auth", errors)
    post = _q(proto_d.get("post_auth_energy", 0.0), Energy, "protocol.post_auth_energy", errors)
    protocol = None
    if e_auth is not None and mcu is not None and tx is not None:
        protocol = _build(errors, "protocol", default_protocol, key, float(e_auth), mcu, tx)

    st_d = dict(data["strategy"])
    kind = st_d.pop("kind")
    st_kw = _kwargs(st_d, {"v_thr_h": Voltage, "v_thr_l": Voltage, "window": TimeSpan,
                           "max_failures": int, "lockout": TimeSpan}, "strategy", errors)
    strategy = _build(errors, "strategy", DefenseStrategy, StrategyKind(kind), **st_kw)

    workload = []
    for i, r in enumerate(data["workload"]):
        path = f"workload[{i}]"
        t = _q(r["time"], TimeSpan, f"{path}.time", errors)
        rep = None
        if "repeat" in r:
            rd = r["repeat"]
            rate = _q(rd.get("rate"), Frequency, f"{path}.repeat.rate", errors)
            rep = Repeat(RepeatMode(rd["mode"]),
                         _q(rd.get("period"), TimeSpan, f"{path}.repeat.period", errors),
                         None if rate is None else float(rate),
                         _q(rd.get("until"), TimeSpan, f"{path}.repeat.until", errors),
                         rd.get("count"))
        actor = Actor(r["actor"])
        default_cred = "valid" if actor is Actor.LEGITIMATE else "invalid"
        default_reader = "doctor-programmer" if actor is Actor.LEGITIMATE else "unknown-external"
        if t is not None:
            workload.append(Request(t, actor, _reader(r.get("reader", default_reader), f"{path}.reader", errors),
                                    Credentials(r.get("credentials", default_cred)), rep))

    opt_d = data.get("options", {})
    opt_kw = _kwargs(opt_d, {"use_esr": bool, "wake_latency": TimeSpan, "deadline": TimeSpan,
                             "trace_capacity": int}, "options", errors)
    options = SimOptions(**opt_kw)
    horizon = _q(data["horizon"], TimeSpan, "horizon", errors)

    if errors:
        raise ScenarioError(errors)
    scenario = Scenario(imd, reservoir, strategy, tuple(workload), horizon, protocol, wpt,
                        data.get("seed", 0), initial_v, post, options)
    return scenario.validate()


def load_scenario(path: Union[str, Path]) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: not valid JSON ({exc})"]) from exc
    return scenario_from_dict(data)
