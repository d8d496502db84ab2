"""Capacitor reservoir sizing and constant-power charging times."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

from .units import Capacitance, Charge, Energy, Power, Resistance, TimeSpan, Voltage

__all__ = [
    "CERAMIC_MIN",
    "CERAMIC_MAX",
    "SIZING_MARGIN",
    "ReservoirSpec",
    "ReservoirState",
    "FeasibilityVerdict",
    "Draw",
    "available_energy",
    "required_capacitance",
    "charge_time_esr",
    "charge_time_simple",
    "charge_times",
    "draw_energy",
    "recharge",
]

CERAMIC_MIN = 0.1e-6
CERAMIC_MAX = 470e-6
# Rounds the minimal 6.19 uF sizing of the reference setup up to a stock 10 uF part.
SIZING_MARGIN = 1.615


@dataclass(frozen=True)
class ReservoirSpec:
    capacitance: Capacitance
    v_max: Voltage
    v_min: Voltage
    esr: Resistance = Resistance(0.0)

    def __post_init__(self):
        object.__setattr__(self, "capacitance", Capacitance(self.capacitance))
        object.__setattr__(self, "v_max", Voltage(self.v_max))
        object.__setattr__(self, "v_min", Voltage(self.v_min))
        object.__setattr__(self, "esr", Resistance(self.esr))
        if not self.capacitance > 0:
            raise ValueError("capacitance must be positive")
        if not 0 <= self.v_min < self.v_max:
            raise ValueError(f"need 0 <= v_min < v_max, got v_min={self.v_min}, v_max={self.v_max}")


@dataclass(frozen=True)
class ReservoirState:
    spec: ReservoirSpec
    voltage: Voltage

    def __post_init__(self):
        object.__setattr__(self, "voltage", Voltage(self.voltage))
        if not 0 <= self.voltage <= self.spec.v_max:
            raise ValueError(f"voltage {self.voltage} outside [0, {self.spec.v_max}]")

    @property
    def stored_energy(self) -> Energy:
        return Energy(0.5 * self.spec.capacitance * self.voltage ** 2)


@dataclass(frozen=True)
class FeasibilityVerdict:
    required_capacitance: Capacitance
    ceramic_feasible: bool
    note: str


class Draw(NamedTuple):
    """Outcome of pulling energy out of the reservoir.

    ``shortfall`` is the part of the request that the charge above ``v_min``
    could not cover; a non-zero shortfall means the load browned out.
    """

    state: ReservoirState
    shortfall: Energy

    @property
    def exhausted(self) -> bool:
        return self.shortfall > 0


def available_energy(spec: ReservoirSpec) -> Energy:
    """Usable energy between v_max and v_min: C (v_max^2 - v_min^2) / 2."""
    return Energy(0.5 * spec.capacitance * (spec.v_max ** 2 - spec.v_min ** 2))


def required_capacitance(e_auth: Energy, v_max: Voltage, v_min: Voltage,
                         margin: float = 1.0) -> FeasibilityVerdict:
    """Smallest capacitance whose usable window holds ``margin * e_auth``."""
    if not e_auth > 0:
        raise ValueError("e_auth must be positive")
    if not 0 <= v_min < v_max:
        raise ValueError(f"need 0 <= v_min < v_max, got v_min={v_min}, v_max={v_max}")
    if margin < 1:
        raise ValueError("margin must be >= 1")
    c = margin * 2.0 * e_auth / (v_max ** 2 - v_min ** 2)
    feasible = CERAMIC_MIN <= c <= CERAMIC_MAX
    if feasible:
        note = "within the ceramic range (0.1 uF to 470 uF)"
    elif c > CERAMIC_MAX:
        note = "above 470 uF: consider sleep-mode strategies or a lower authentication energy"
    else:
        note = "below 0.1 uF: decoupling losses will dominate, size up"
    return FeasibilityVerdict(Capacitance(c), feasible, note)


def _esr_time(q: float, c: float, r: float, p_ch: float) -> float:
    # Plain-float form; the simulation kernels compile this same function.
    if q <= 0.0:
        return 0.0
    k = 4.0 * c * c * r * p_ch
    if k == 0.0:
        return q * q / (2.0 * c * p_ch)
    a = math.sqrt(q * q + k)
    # ln((A + Q) / sqrt(K)) == asinh(Q / sqrt(K)), stable for tiny K
    return (q * q + q * a + k * math.asinh(q / math.sqrt(k))) / (4.0 * c * p_ch)


def charge_time_esr(q: Charge, c: Capacitance, r: Resistance, p_ch: Power) -> TimeSpan:
    """Time for a constant-power source to push charge ``q`` into C through its ESR.

    With A = sqrt(Q^2 + 4 C^2 R P) the time is
    (Q^2 + Q A + 4 C^2 R P ln((A + Q) / sqrt(4 C^2 R P))) / (4 C P).
    R = 0 takes the limit Q^2 / (2 C P) directly.
    """
    if q < 0 or not c > 0 or not p_ch > 0 or r < 0:
        raise ValueError("need q >= 0, c > 0, r >= 0, p_ch > 0")
    return TimeSpan(_esr_time(float(q), float(c), float(r), float(p_ch)))


def charge_time_simple(e: Energy, p_ch: Power) -> TimeSpan:
    """Loss-free charging time E / P."""
    if e < 0 or not p_ch > 0:
        raise ValueError("need e >= 0 and p_ch > 0")
    return TimeSpan(e / p_ch)


def charge_times(spec: ReservoirSpec, p_ch: Power) -> Tuple[TimeSpan, TimeSpan]:
    """(empty -> v_max, v_min -> v_max) charging times, ESR ignored."""
    if not p_ch > 0:
        raise ValueError("p_ch must be positive")
    e_initial = 0.5 * spec.capacitance * spec.v_max ** 2
    return TimeSpan(e_initial / p_ch), TimeSpan(available_energy(spec) / p_ch)


def draw_energy(state: ReservoirState, e: Energy) -> Draw:
    if e < 0:
        raise ValueError("cannot draw negative energy")
    if e == 0:
        return Draw(state, Energy(0.0))
    spec = state.spec
    above_min = 0.5 * spec.capacitance * max(state.voltage ** 2 - spec.v_min ** 2, 0.0)
    v2 = state.voltage ** 2 - 2.0 * e / spec.capacitance
    shortfall = max(e - above_min, 0.0)
    return Draw(ReservoirState(spec, math.sqrt(max(0.0, v2))), Energy(shortfall))


def recharge(state: ReservoirState, e: Energy) -> ReservoirState:
    """Add energy ``e``; raises if that would push the voltage past v_max."""
    if e < 0:
        raise ValueError("cannot add negative energy")
    spec = state.spec
    v = math.sqrt(state.voltage ** 2 + 2.0 * e / spec.capacitance)
    if v > spec.v_max * (1 + 1e-12):
        raise ValueError(f"recharge would exceed v_max ({v:.6g} V > {spec.v_max} V)")
    return ReservoirState(spec, min(v, float(spec.v_max)))
