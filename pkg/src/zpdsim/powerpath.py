"""
Wireless power transfer catalog, passive-communication schemes, range gating
and regulatory limit checks.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Dict, List, Optional

from .units import Length, Power

__all__ = [
    "WptTechnique",
    "WptProfile",
    "WPT_CATALOG",
    "PassiveCommScheme",
    "ReaderKind",
    "Medium",
    "Reader",
    "RangePolicy",
    "RangeRejected",
    "WptSelection",
    "select_wpt",
    "range_gate",
    "RegulatoryLimits",
    "Proposal",
    "Verdict",
    "LimitNotConfigured",
    "check_regulatory",
    "needs_reservoir",
    "catalog_json",
    "schemes_json",
]

BEDSIDE_RANGE = 1.524            # 5 ft
BASE_STATION_REACH = 3.048       # 10 ft, how far a base station is allowed to sit from the patient
CONTACT_THRESHOLD = 0.05


class WptTechnique(str, enum.Enum):
    IPT = "IPT"
    RFPT = "RFPT"
    APT = "APT"


@dataclass(frozen=True)
class WptProfile:
    technique: WptTechnique
    delivered_power: Power
    max_range: float
    requires_contact_medium: bool
    # '+' relatively good, '-' relatively poor, '-*' poor and needs a non-air medium
    range: str
    biological_effects: str
    transferred_power: str
    receiver_size: str
    documented_power: bool

    def as_dict(self) -> dict:
        return {
            "technique": self.technique.value,
            "delivered_power_W": float(self.delivered_power),
            "max_range_m": self.max_range,
            "requires_contact_medium": self.requires_contact_medium,
            "profile": {
                "range": self.range,
                "biological_effects": self.biological_effects,
                "transferred_power": self.transferred_power,
                "receiver_size": self.receiver_size,
            },
            "delivered_power_is_placeholder": not self.documented_power,
        }


WPT_CATALOG: Dict[WptTechnique, WptProfile] = {
    WptTechnique.IPT: WptProfile(WptTechnique.IPT, Power(6.15e-3), CONTACT_THRESHOLD, False,
                                 "-", "-", "+", "-", True),
    WptTechnique.RFPT: WptProfile(WptTechnique.RFPT, Power(100e-6), BASE_STATION_REACH, False,
                                  "+", "-", "-", "+", False),
    WptTechnique.APT: WptProfile(WptTechnique.APT, Power(1e-3), CONTACT_THRESHOLD, True,
                                 "-*", "+", "+", "+", False),
}


class PassiveCommScheme(str, enum.Enum):
    """Transmitter-side taxonomy of passive communication devices.

    The suffix tells whether data shares the power band (PB, one antenna) or
    runs on an independent band (IB, two antennas).
    """

    ACTIVE_TX_IB = "ActiveTX-IB"
    IC_PB = "IC-PB"
    EMB_PB = "EMB-PB"
    EMB_IB = "EMB-IB"

    @property
    def shares_power_band(self) -> bool:
        return self.value.endswith("-PB")

    @property
    def antennas_required(self) -> int:
        return 1 if self.shares_power_band else 2

    @property
    def transmit_mode(self) -> str:
        return {"ActiveTX": "active", "IC": "load-modulation", "EMB": "backscatter"}[self.value.split("-")[0]]

    @property
    def transmit_power_fraction(self) -> float:
        """Share of the active radio current spent while the implant transmits.

        Load modulation and backscatter only switch the antenna load, so they
        are charged a near-zero 1 %.
        """
        return 1.0 if self.transmit_mode == "active" else 0.01


class ReaderKind(str, enum.Enum):
    PROGRAMMER = "doctor-programmer"
    BASE_STATION = "bedside-base-station"
    UNKNOWN = "unknown-external"


class Medium(str, enum.Enum):
    AIR = "air"
    TISSUE_CONTACT = "tissue-contact"


@dataclass(frozen=True)
class Reader:
    kind: ReaderKind
    distance: float = 0.0
    # an unknown reader is gated like the class it claims to be
    claimed: Optional[ReaderKind] = None
    medium: Medium = Medium.AIR

    def __post_init__(self):
        object.__setattr__(self, "kind", ReaderKind(self.kind))
        object.__setattr__(self, "distance", float(Length(self.distance)))
        object.__setattr__(self, "medium", Medium(self.medium))
        if self.claimed is not None:
            object.__setattr__(self, "claimed", ReaderKind(self.claimed))

    @property
    def effective_kind(self) -> ReaderKind:
        if self.kind is not ReaderKind.UNKNOWN:
            return self.kind
        if self.claimed in (None, ReaderKind.UNKNOWN):
            return ReaderKind.BASE_STATION
        return self.claimed


@dataclass(frozen=True)
class RangePolicy:
    bedside_range: float = BEDSIDE_RANGE
    contact_threshold: float = CONTACT_THRESHOLD


class RangeRejected(ValueError):
    pass


def range_gate(reader: Reader, policy: RangePolicy = RangePolicy()) -> bool:
    """Touch-to-access gate: True means the reader may talk to the implant."""
    if reader.effective_kind is ReaderKind.PROGRAMMER:
        return reader.distance <= policy.contact_threshold
    return reader.distance < policy.bedside_range


@dataclass(frozen=True)
class WptSelection:
    technique: WptTechnique
    delivered_power: Power
    rationale: str


def select_wpt(reader: Reader, medium: Optional[Medium] = None, prefer_apt: bool = False,
               policy: RangePolicy = RangePolicy(),
               powers: Optional[Dict[WptTechnique, float]] = None) -> WptSelection:
    """Adaptive technique choice: near-field for the programmer, RF for the base station."""
    medium = Medium(medium) if medium is not None else reader.medium
    if not range_gate(reader, policy):
        raise RangeRejected(
            f"{reader.kind.value} at {reader.distance:g} m is outside the access range "
            f"for {reader.effective_kind.value}")
    powers = powers or {}

    def pick(tech: WptTechnique, why: str) -> WptSelection:
        p = powers.get(tech, WPT_CATALOG[tech].delivered_power)
        return WptSelection(tech, Power(p), why)

    if prefer_apt and medium is not Medium.TISSUE_CONTACT:
        raise ValueError("APT needs a tissue-contact medium")
    if reader.effective_kind is ReaderKind.PROGRAMMER:
        if prefer_apt:
            return pick(WptTechnique.APT, "programmer in tissue contact, APT requested")
        return pick(WptTechnique.IPT, "programmer at contact range: IPT reuses the coil and is cheaper than APT")
    return pick(WptTechnique.RFPT, "base station at bedside range: only RFPT reaches beyond contact")


@dataclass(frozen=True)
class RegulatoryLimits:
    medradio_eirp_max: float = 25e-6
    sar_public_max: float = 2.0
    sar_controlled_max: float = 10.0
    acoustic_i_spta_max: Optional[float] = None
    acoustic_i_sppa_max: Optional[float] = None

    def __post_init__(self):
        for name in ("medradio_eirp_max", "sar_public_max", "sar_controlled_max",
                     "acoustic_i_spta_max", "acoustic_i_sppa_max"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_mapping(cls, data: dict) -> "RegulatoryLimits":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown regulatory keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Proposal:
    band: str
    eirp: Optional[float] = None
    sar: Optional[float] = None
    environment: str = "public"
    i_spta: Optional[float] = None
    i_sppa: Optional[float] = None


@dataclass(frozen=True)
class Verdict:
    check: str
    passed: bool
    applicable: bool = True
    value: Optional[float] = None
    limit: Optional[float] = None
    margin: Optional[float] = None
    detail: str = ""

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class LimitNotConfigured(RuntimeError):
    pass


def _limit_check(name: str, value: float, limit: float, detail: str) -> Verdict:
    return Verdict(name, value <= limit, True, value, limit, limit - value, detail)


def check_regulatory(limits: RegulatoryLimits, proposal: Proposal) -> List[Verdict]:
    verdicts: List[Verdict] = []
    band = proposal.band.strip().lower()
    if proposal.eirp is not None:
        if band == "medradio":
            verdicts.append(_limit_check("eirp", proposal.eirp, limits.medradio_eirp_max,
                                         "MedRadio EIRP cap"))
        else:
            verdicts.append(Verdict("eirp", True, False, proposal.eirp, None, None,
                                    f"no EIRP cap modelled for band {proposal.band!r}"))
    if proposal.sar is not None:
        env = proposal.environment.strip().lower()
        if env == "public":
            limit = limits.sar_public_max
        elif env == "controlled":
            limit = limits.sar_controlled_max
        else:
            raise ValueError(f"unknown exposure environment {proposal.environment!r}")
        verdicts.append(_limit_check("sar", proposal.sar, limit, f"peak spatial-average SAR, {env}"))
    for name, value, limit in (("i_spta", proposal.i_spta, limits.acoustic_i_spta_max),
                               ("i_sppa", proposal.i_sppa, limits.acoustic_i_sppa_max)):
        if value is None:
            continue
        if limit is None:
            raise LimitNotConfigured(f"acoustic limit {name} is not configured; supply it in the "
                                     f"'regulatory' config section")
        verdicts.append(_limit_check(name, value, limit, "acoustic intensity"))
    return verdicts


def needs_reservoir(peak_load: Power, harvested: Power) -> bool:
    return peak_load > harvested


def catalog_json() -> str:
    rows = [WPT_CATALOG[t].as_dict() for t in WptTechnique]
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"


def schemes_json() -> str:
    rows = [{
        "scheme": s.value,
        "shares_power_band": s.shares_power_band,
        "antennas_required": s.antennas_required,
        "transmit_mode": s.transmit_mode,
        "transmit_power_fraction": s.transmit_power_fraction,
    } for s in PassiveCommScheme]
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"
