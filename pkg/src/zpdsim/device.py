"""
Implant component models and the closed-form battery lifetime / battery-DoS
depletion math.

Defaults describe the reference implant: a Cortex-M0+ class MCU at 19 MHz
drawing 0.78 mA when active, a MedRadio transceiver drawing 4.9 mA at an
effective 265 kbps, and a radio duty cycle of 0.21 % (three minutes a day).
Sleep currents default to zero; the lifetime arithmetic ignores them unless
they are set.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from .powerpath import PassiveCommScheme
from .units import Charge, Current, DataRate, Energy, Frequency, TimeSpan, Voltage

__all__ = [
    "HALF_FULL",
    "BatterySpec",
    "McuSpec",
    "TransceiverSpec",
    "DutyCycleProfile",
    "ImdConfig",
    "average_current",
    "battery_lifetime",
    "dos_depletion_time",
    "step_energy",
    "lifetime_sweep",
    "depletion_sweep",
    "lifetime_csv",
    "depletion_csv",
]

HALF_FULL = 0.5
SUPPLY_RANGE = (2.05, 3.5)


@dataclass(frozen=True)
class BatterySpec:
    capacity: Charge
    nominal_voltage: Voltage = Voltage(3.3)
    initial_soc: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "capacity", Charge(self.capacity))
        object.__setattr__(self, "nominal_voltage", Voltage(self.nominal_voltage))
        if not self.capacity > 0:
            raise ValueError("battery capacity must be positive")
        if not 0.0 <= self.initial_soc <= 1.0:
            raise ValueError("initial_soc must lie in [0, 1]")
        if not self.nominal_voltage > 0:
            raise ValueError("nominal voltage must be positive")

    @classmethod
    def from_mah(cls, mah: float, nominal_voltage: float = 3.3, initial_soc: float = 1.0) -> "BatterySpec":
        return cls(Charge(mah, "mAh"), Voltage(nominal_voltage), initial_soc)

    @property
    def available_charge(self) -> Charge:
        return Charge(self.capacity * self.initial_soc)

    @property
    def available_energy(self) -> Energy:
        return Energy(self.capacity * self.initial_soc * self.nominal_voltage)

    def with_soc(self, soc: float) -> "BatterySpec":
        return BatterySpec(self.capacity, self.nominal_voltage, soc)


@dataclass(frozen=True)
class McuSpec:
    active_current: Current = Current(0.78e-3)
    sleep_current: Current = Current(0.0)
    clock: Frequency = Frequency(19e6)
    supply: Voltage = Voltage(3.3)

    def __post_init__(self):
        for name, kind in (("active_current", Current), ("sleep_current", Current),
                           ("clock", Frequency), ("supply", Voltage)):
            object.__setattr__(self, name, kind(getattr(self, name)))
        if not 0 <= self.sleep_current <= self.active_current:
            raise ValueError("need 0 <= sleep_current <= active_current")
        if not self.clock > 0:
            raise ValueError("clock must be positive")
        lo, hi = SUPPLY_RANGE
        if not lo <= self.supply <= hi:
            raise ValueError(f"supply {self.supply} V outside the {lo}-{hi} V operating range")


@dataclass(frozen=True)
class TransceiverSpec:
    active_current: Current = Current(4.9e-3)
    sleep_current: Current = Current(0.0)
    data_rate: DataRate = DataRate(265e3)
    scheme: PassiveCommScheme = PassiveCommScheme.ACTIVE_TX_IB

    def __post_init__(self):
        object.__setattr__(self, "active_current", Current(self.active_current))
        object.__setattr__(self, "sleep_current", Current(self.sleep_current))
        object.__setattr__(self, "data_rate", DataRate(self.data_rate))
        object.__setattr__(self, "scheme", PassiveCommScheme(self.scheme))
        if not 0 <= self.sleep_current <= self.active_current:
            raise ValueError("need 0 <= sleep_current <= active_current")
        if not self.data_rate > 0:
            raise ValueError("data_rate must be positive")


@dataclass(frozen=True)
class DutyCycleProfile:
    mcu_duty: float = 0.05
    radio_duty: float = 0.0021

    def __post_init__(self):
        for name in ("mcu_duty", "radio_duty"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ImdConfig:
    battery: BatterySpec
    mcu: McuSpec = field(default_factory=McuSpec)
    transceiver: TransceiverSpec = field(default_factory=TransceiverSpec)
    duty: DutyCycleProfile = field(default_factory=DutyCycleProfile)
    # constant draw of the therapy circuitry, outside the MCU/radio model
    therapy_current: Current = Current(0.0)

    def __post_init__(self):
        object.__setattr__(self, "therapy_current", Current(self.therapy_current))
        if self.therapy_current < 0:
            raise ValueError("therapy_current must be >= 0")

    @property
    def active_current(self) -> Current:
        return Current(self.mcu.active_current + self.transceiver.active_current)

    @property
    def idle_current(self) -> Current:
        return Current(self.mcu.sleep_current + self.transceiver.sleep_current + self.therapy_current)

    @property
    def active_power(self) -> float:
        return self.mcu.supply * self.active_current


def average_current(mcu: McuSpec, tx: TransceiverSpec, duty: DutyCycleProfile) -> Current:
    return Current(duty.mcu_duty * mcu.active_current + (1 - duty.mcu_duty) * mcu.sleep_current
                   + duty.radio_duty * tx.active_current + (1 - duty.radio_duty) * tx.sleep_current)


def battery_lifetime(batt: BatterySpec, avg: Current) -> Optional[TimeSpan]:
    """Charge over average current. ``None`` when nothing draws (never depletes)."""
    if avg < 0:
        raise ValueError("average current must be >= 0")
    if avg == 0:
        return None
    return TimeSpan(batt.available_charge / avg)


def dos_depletion_time(batt: BatterySpec, mcu: McuSpec, tx: TransceiverSpec,
                       attack_duty: float = 1.0, other_idle_current: float = 0.0) -> Optional[TimeSpan]:
    """Time for bogus authentication requests to drain the available charge.

    While the attacker keeps the implant busy both the MCU and the radio sit in
    their active modes; the rest of the time they sleep. ``attack_duty`` = 1
    means back-to-back requests.
    """
    if not 0.0 < attack_duty <= 1.0:
        raise ValueError("attack_duty must lie in (0, 1]")
    draw = (attack_duty * (mcu.active_current + tx.active_current)
            + (1.0 - attack_duty) * (mcu.sleep_current + tx.sleep_current + other_idle_current))
    return battery_lifetime(batt, Current(draw))


def step_energy(mcu: McuSpec, tx: TransceiverSpec, compute_cycles: float, bytes_on_air: float,
                tx_fraction: float = 1.0) -> Energy:
    """Energy of one protocol step: MCU time at its clock plus radio airtime.

    ``tx_fraction`` scales the radio current for passive transmit schemes.
    """
    if compute_cycles < 0 or bytes_on_air < 0:
        raise ValueError("counts must be >= 0")
    mcu_time = compute_cycles / mcu.clock
    air_time = 8.0 * bytes_on_air / tx.data_rate
    return Energy(mcu.supply * (mcu.active_current * mcu_time
                                + tx_fraction * tx.active_current * air_time))


def lifetime_sweep(duties: Sequence[float], battery: BatterySpec, mcu: McuSpec = McuSpec(),
                   tx: TransceiverSpec = TransceiverSpec(),
                   radio_duty: float = 0.0021) -> List[Tuple[float, Optional[float]]]:
    """(mcu duty, lifetime in hours) for each processor duty cycle."""
    rows = []
    for d in duties:
        avg = average_current(mcu, tx, DutyCycleProfile(d, radio_duty))
        life = battery_lifetime(battery, avg)
        rows.append((d, None if life is None else life / 3600.0))
    return rows


def depletion_sweep(capacities_mah: Iterable[float], soc: float = HALF_FULL,
                    mcu: McuSpec = McuSpec(), tx: TransceiverSpec = TransceiverSpec(),
                    attack_duty: float = 1.0, nominal_voltage: float = 3.3) -> List[Tuple[float, float]]:
    rows = []
    for mah in capacities_mah:
        batt = BatterySpec.from_mah(mah, nominal_voltage, soc)
        t = dos_depletion_time(batt, mcu, tx, attack_duty)
        rows.append((mah, t / 3600.0))
    return rows


def _fmt(x: Optional[float]) -> str:
    return "inf" if x is None else repr(float(x))


def lifetime_csv(rows, param: str = "mcu_duty") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", "lifetime_hours"])
    for value, hours in rows:
        w.writerow([param, repr(float(value)), _fmt(hours)])
    return buf.getvalue()


def depletion_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["capacity_mAh", "depletion_hours"])
    for mah, hours in rows:
        w.writerow([repr(float(mah)), _fmt(hours)])
    return buf.getvalue()
