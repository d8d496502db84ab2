"""
Unit-carrying scalar quantities.

Every quantity subclasses :class:`float` and stores its magnitude in the SI
base unit, so the arithmetic stays plain double precision. The subclass only
marks the dimension and validates the value when it is constructed. Prefixed
units (uF, mA, kbps ...) show up only when text is parsed or printed.

Text grammar::

    <number><optional prefix {p,n,u,µ,m,k,M}><unit>

where unit is one of J, W, V, F, C, A, s, h, bps, Hz, Ohm, Ah (so ``mAh``
parses as milli-Ah) or m (metres). A capacity in mAh is a charge; turning it
into an energy needs a nominal voltage (``convert(q, "J", voltage=...)``).
"""

from __future__ import annotations

import math
import re
from decimal import Decimal, InvalidOperation
from typing import ClassVar, Dict, Optional, Tuple, Type, Union

__all__ = [
    "Quantity",
    "Energy",
    "Power",
    "Voltage",
    "Capacitance",
    "Charge",
    "Current",
    "TimeSpan",
    "DataRate",
    "Frequency",
    "Resistance",
    "Length",
    "UnitError",
    "DimensionError",
    "parse_quantity",
    "convert",
    "FOOT",
]

FOOT = 0.3048

PREFIXES: Dict[str, Decimal] = {
    "p": Decimal("1e-12"),
    "n": Decimal("1e-9"),
    "u": Decimal("1e-6"),
    "µ": Decimal("1e-6"),
    "μ": Decimal("1e-6"),
    "m": Decimal("1e-3"),
    "k": Decimal("1e3"),
    "M": Decimal("1e6"),
}


class UnitError(ValueError):
    """Text that does not follow the unit grammar, or a missing voltage."""


class DimensionError(TypeError):
    """Conversion between incompatible dimensions."""


class Quantity(float):
    """A float holding an SI magnitude of one physical dimension."""

    si_unit: ClassVar[str] = ""
    nonnegative: ClassVar[bool] = False
    # unit symbol -> scale to the SI base unit
    units: ClassVar[Dict[str, Decimal]] = {}

    def __new__(cls, value: Union[float, str, "Quantity"] = 0.0, unit: Optional[str] = None):
        if isinstance(value, str):
            parsed = parse_quantity(value, expect=cls)
            return parsed
        if isinstance(value, Quantity) and not isinstance(value, cls):
            raise DimensionError(f"cannot build {cls.__name__} from {type(value).__name__}")
        if unit is not None and unit != cls.si_unit:
            magnitude = float(_to_decimal(value) * _scale_of(cls, unit))
        else:
            magnitude = float(value)
        if not math.isfinite(magnitude):
            raise ValueError(f"{cls.__name__} must be finite, got {magnitude!r}")
        if cls.nonnegative and magnitude < 0:
            raise ValueError(f"{cls.__name__} must be non-negative, got {magnitude!r}")
        obj = super().__new__(cls, magnitude)
        obj._display = unit if unit is not None else cls.si_unit
        return obj

    @property
    def unit(self) -> str:
        return getattr(self, "_display", self.si_unit)

    @property
    def si(self) -> float:
        return float(self)

    def to(self, unit: str) -> float:
        """Magnitude expressed in ``unit`` (same dimension)."""
        if unit == self.si_unit:
            return float(self)
        return float(Decimal(float(self)) / _scale_of(type(self), unit))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({float(self)!r} {self.si_unit})"

    def __str__(self) -> str:
        if self.unit == self.si_unit:
            return f"{float(self):g} {self.si_unit}"
        return f"{self.to(self.unit):g} {self.unit}"

    def __reduce__(self):
        return (type(self), (float(self),))


def _make(name: str, symbol: str, nonnegative: bool, extra: Optional[Dict[str, str]] = None) -> Type[Quantity]:
    units = {symbol: Decimal(1)}
    for sym, scale in (extra or {}).items():
        units[sym] = Decimal(scale)
    return type(name, (Quantity,), {"si_unit": symbol, "nonnegative": nonnegative, "units": units})


Energy = _make("Energy", "J", True)
Power = _make("Power", "W", True)
Voltage = _make("Voltage", "V", False)
Capacitance = _make("Capacitance", "F", True)
Charge = _make("Charge", "C", False, {"Ah": "3600"})
Current = _make("Current", "A", False)
TimeSpan = _make("TimeSpan", "s", True, {"h": "3600"})
DataRate = _make("DataRate", "bps", True)
Frequency = _make("Frequency", "Hz", True)
Resistance = _make("Resistance", "Ohm", True)
Length = _make("Length", "m", True, {"ft": str(FOOT)})

_ALL: Tuple[Type[Quantity], ...] = (
    Energy, Power, Voltage, Capacitance, Charge, Current, TimeSpan,
    DataRate, Frequency, Resistance, Length,
)
_SYMBOLS: Dict[str, Tuple[Type[Quantity], Decimal]] = {}
for _cls in _ALL:
    for _sym, _scale in _cls.units.items():
        _SYMBOLS[_sym] = (_cls, _scale)

_NUMBER = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_PATTERN = re.compile(rf"^\s*({_NUMBER})\s*([A-Za-zµμ]*)\s*$")


def _to_decimal(value) -> Decimal:
    try:
        return Decimal(repr(float(value))) if not isinstance(value, Decimal) else value
    except (InvalidOperation, ValueError) as exc:
        raise UnitError(f"not a number: {value!r}") from exc


def _split_unit(suffix: str) -> Tuple[Type[Quantity], Decimal]:
    if suffix in _SYMBOLS:
        return _SYMBOLS[suffix]
    if len(suffix) > 1 and suffix[0] in PREFIXES and suffix[1:] in _SYMBOLS:
        cls, scale = _SYMBOLS[suffix[1:]]
        return cls, PREFIXES[suffix[0]] * scale
    raise UnitError(f"unknown unit {suffix!r}")


def _scale_of(cls: Type[Quantity], unit: str) -> Decimal:
    found, scale = _split_unit(unit)
    if found is not cls:
        raise DimensionError(f"{unit!r} is a {found.__name__} unit, not {cls.__name__}")
    return scale


def parse_quantity(text: str, expect: Optional[Type[Quantity]] = None,
                   voltage: Optional[float] = None) -> Quantity:
    """Parse ``"<number><prefix><unit>"`` into a quantity.

    A bare number is accepted when ``expect`` is given and is read in SI units.
    A charge in (m)Ah is turned into an energy only when ``expect`` is Energy and
    a nominal ``voltage`` is supplied.
    """
    match = _PATTERN.match(text)
    if not match:
        raise UnitError(f"cannot parse quantity {text!r}")
    number, suffix = match.groups()
    magnitude = Decimal(number)
    if not suffix:
        if expect is None:
            raise UnitError(f"{text!r} has no unit")
        return expect(float(magnitude))
    cls, scale = _split_unit(suffix)
    si = float(magnitude * scale)
    if expect is None or expect is cls:
        return cls(si)
    if expect is Energy and cls is Charge:
        if voltage is None:
            raise UnitError(f"{text!r} is a charge; a nominal voltage is needed to express it in joules")
        return Energy(float(magnitude * scale * _to_decimal(voltage)))
    raise DimensionError(f"{text!r} is a {cls.__name__}, expected {expect.__name__}")


def convert(value: Quantity, target: str, voltage: Optional[float] = None) -> Quantity:
    """Re-express ``value`` in ``target`` units.

    Same-dimension conversion keeps the SI magnitude bit-for-bit and only
    changes the display unit. Charge <-> energy needs the nominal ``voltage``
    (E = Q * V, i.e. Ah * 3600 * V).
    """
    cls, _ = _split_unit(target)
    if isinstance(value, cls):
        return cls(float(value)) if target == cls.si_unit else _relabel(cls, float(value), target)
    if voltage is None:
        raise DimensionError(f"cannot convert {type(value).__name__} to {target!r}")
    v = _to_decimal(voltage)
    if isinstance(value, Charge) and cls is Energy:
        return _relabel(Energy, float(_to_decimal(float(value)) * v), target)
    if isinstance(value, Energy) and cls is Charge:
        if v == 0:
            raise ValueError("nominal voltage must be non-zero")
        return _relabel(Charge, float(_to_decimal(float(value)) / v), target)
    raise DimensionError(f"cannot convert {type(value).__name__} to {target!r}")


def _relabel(cls: Type[Quantity], si: float, unit: str) -> Quantity:
    q = cls(si)
    q._display = unit
    return q
