"""Defense strategies the simulator can play against a workload."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional

from ..reservoir import ReservoirSpec, available_energy
from ..units import TimeSpan, Voltage
from . import _kernels as K

__all__ = ["StrategyKind", "DefenseStrategy", "DEFAULT_WINDOW", "DEFAULT_MAX_FAILURES", "DEFAULT_LOCKOUT"]

DEFAULT_WINDOW = 60.0
DEFAULT_MAX_FAILURES = 3
DEFAULT_LOCKOUT = 60.0


class StrategyKind(str, enum.Enum):
    NONE_BASELINE = "none-baseline"
    ZPD_FULL_RESERVOIR = "zpd-full-reservoir"
    ZPD_SLEEP_COMPARATOR = "zpd-sleep-voltage-comparator"
    ZPD_SLEEP_PER_STEP = "zpd-sleep-per-protocol-step"
    GRADUAL_SWITCH = "gradual-switch"
    TIMEOUT = "timeout"


_CODES = {
    StrategyKind.NONE_BASELINE: K.S_BASELINE,
    StrategyKind.ZPD_FULL_RESERVOIR: K.S_FULL,
    StrategyKind.ZPD_SLEEP_COMPARATOR: K.S_COMPARATOR,
    StrategyKind.ZPD_SLEEP_PER_STEP: K.S_PER_STEP,
    StrategyKind.GRADUAL_SWITCH: K.S_GRADUAL,
    StrategyKind.TIMEOUT: K.S_TIMEOUT,
}


@dataclass(frozen=True)
class DefenseStrategy:
    kind: StrategyKind
    v_thr_h: Optional[Voltage] = None
    v_thr_l: Optional[Voltage] = None
    window: TimeSpan = TimeSpan(DEFAULT_WINDOW)
    max_failures: int = DEFAULT_MAX_FAILURES
    lockout: TimeSpan = TimeSpan(DEFAULT_LOCKOUT)

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "window", TimeSpan(self.window))
        object.__setattr__(self, "lockout", TimeSpan(self.lockout))
        for name in ("v_thr_h", "v_thr_l"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, Voltage(value))
        if self.kind is StrategyKind.ZPD_SLEEP_COMPARATOR and (self.v_thr_h is None or self.v_thr_l is None):
            raise ValueError("the comparator strategy needs v_thr_h and v_thr_l")
        if int(self.max_failures) != self.max_failures or self.max_failures < 1:
            raise ValueError("max_failures must be a positive integer")

    @classmethod
    def baseline(cls) -> "DefenseStrategy":
        return cls(StrategyKind.NONE_BASELINE)

    @classmethod
    def full_reservoir(cls) -> "DefenseStrategy":
        return cls(StrategyKind.ZPD_FULL_RESERVOIR)

    @classmethod
    def comparator(cls, v_thr_h: float, v_thr_l: float) -> "DefenseStrategy":
        return cls(StrategyKind.ZPD_SLEEP_COMPARATOR, Voltage(v_thr_h), Voltage(v_thr_l))

    @classmethod
    def per_step(cls) -> "DefenseStrategy":
        return cls(StrategyKind.ZPD_SLEEP_PER_STEP)

    @classmethod
    def gradual(cls, window: float = DEFAULT_WINDOW) -> "DefenseStrategy":
        return cls(StrategyKind.GRADUAL_SWITCH, window=TimeSpan(window))

    @classmethod
    def timeout(cls, max_failures: int = DEFAULT_MAX_FAILURES, lockout: float = DEFAULT_LOCKOUT) -> "DefenseStrategy":
        return cls(StrategyKind.TIMEOUT, max_failures=max_failures, lockout=TimeSpan(lockout))

    @property
    def is_zpd(self) -> bool:
        return self.kind.value.startswith("zpd-")

    @property
    def harvests(self) -> bool:
        """Whether the strategy ever runs pre-authentication work on harvested energy."""
        return self.is_zpd or self.kind is StrategyKind.GRADUAL_SWITCH

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def label(self) -> str:
        if self.kind is StrategyKind.ZPD_SLEEP_COMPARATOR:
            return f"{self.kind.value}[{self.v_thr_h:g}V/{self.v_thr_l:g}V]"
        if self.kind is StrategyKind.TIMEOUT:
            return f"{self.kind.value}[{self.max_failures}x/{self.lockout:g}s]"
        if self.kind is StrategyKind.GRADUAL_SWITCH:
            return f"{self.kind.value}[{self.window:g}s]"
        return self.kind.value

    def violations(self, reservoir: Optional[ReservoirSpec], e_auth: float, max_step: float,
                   direct_harvest_ok: bool) -> List[str]:
        """Problems that make this strategy unusable with the given reservoir."""
        out: List[str] = []
        if not self.harvests:
            return out
        if reservoir is None:
            if not direct_harvest_ok:
                out.append(f"strategy {self.kind.value} needs a reservoir: harvested power is below "
                           f"the active load")
            elif self.kind is StrategyKind.ZPD_SLEEP_COMPARATOR:
                out.append("the comparator strategy needs a reservoir to hold its thresholds")
            return out
        usable = float(available_energy(reservoir))
        if self.kind in (StrategyKind.ZPD_FULL_RESERVOIR, StrategyKind.GRADUAL_SWITCH):
            if usable < e_auth * (1 - 1e-12):
                out.append(f"reservoir holds {usable:.6g} J between v_min and v_max, "
                           f"less than one authentication ({e_auth:.6g} J)")
        elif self.kind is StrategyKind.ZPD_SLEEP_PER_STEP:
            if usable < max_step * (1 - 1e-12):
                out.append(f"reservoir holds {usable:.6g} J, less than the largest protocol step "
                           f"({max_step:.6g} J)")
        elif self.kind is StrategyKind.ZPD_SLEEP_COMPARATOR:
            h, lo = self.v_thr_h, self.v_thr_l
            if not reservoir.v_min <= lo < h <= reservoir.v_max:
                out.append(f"need v_min <= v_thr_l < v_thr_h <= v_max, got {reservoir.v_min:g} <= "
                           f"{lo:g} < {h:g} <= {reservoir.v_max:g}")
        return out
